//! Plain-text dump/load of problems in a sparse triplet format.
//!
//! Line-oriented, `#` starts a comment. Schema (one record per line):
//!
//! ```text
//! sdp 1                         format marker and version
//! vars <n>                      number of decision variables
//! obj <var> <val>               objective entry
//! block <j> <dim>               declares PSD block j
//! bconst <j> <r> <c> <val>      constant entry (r >= c; mirrored on load)
//! bcoef <j> <var> <r> <c> <val> coefficient entry of variable <var>
//! ineq <k> <const>              declares inequality k with constant term
//! icoef <k> <var> <val>         inequality coefficient
//! eq <k> <const>                declares equality k with constant term
//! ecoef <k> <var> <val>         equality coefficient
//! ```
//!
//! Values round-trip exactly (hex float encoding).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::problem::{LinearConstraint, PsdBlock, SdpError, SdpProblem};

fn fmt_f64(v: f64) -> String {
    // Hex mantissa keeps dumps byte-exact across round trips.
    format!("{}", hexf(v))
}

fn hexf(v: f64) -> String {
    format!("0x{:016x}", v.to_bits())
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, SdpError> {
    if let Some(hex) = tok.strip_prefix("0x") {
        let bits = u64::from_str_radix(hex, 16).map_err(|e| SdpError::Parse {
            line,
            msg: format!("bad float bits {tok:?}: {e}"),
        })?;
        Ok(f64::from_bits(bits))
    } else {
        tok.parse().map_err(|e| SdpError::Parse {
            line,
            msg: format!("bad float {tok:?}: {e}"),
        })
    }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, SdpError> {
    tok.parse().map_err(|e| SdpError::Parse {
        line,
        msg: format!("bad integer {tok:?}: {e}"),
    })
}

/// Serializes `p` to the triplet format.
pub fn dump(p: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sdp 1");
    let _ = writeln!(out, "vars {}", p.num_vars);
    for (i, v) in &p.objective {
        let _ = writeln!(out, "obj {} {}", i, fmt_f64(*v));
    }
    for (j, b) in p.psd_blocks.iter().enumerate() {
        let _ = writeln!(out, "block {} {}", j, b.dim);
        for r in 0..b.dim {
            for c in 0..=r {
                let v = b.constant[(r, c)];
                if v != 0.0 {
                    let _ = writeln!(out, "bconst {} {} {} {}", j, r, c, fmt_f64(v));
                }
            }
        }
        for (var, f) in &b.coeffs {
            for r in 0..b.dim {
                for c in 0..=r {
                    let v = f[(r, c)];
                    if v != 0.0 {
                        let _ = writeln!(out, "bcoef {} {} {} {} {}", j, var, r, c, fmt_f64(v));
                    }
                }
            }
        }
    }
    for (k, cns) in p.inequalities.iter().enumerate() {
        let _ = writeln!(out, "ineq {} {}", k, fmt_f64(cns.constant));
        for (var, g) in &cns.coeffs {
            let _ = writeln!(out, "icoef {} {} {}", k, var, fmt_f64(*g));
        }
    }
    for (k, cns) in p.equalities.iter().enumerate() {
        let _ = writeln!(out, "eq {} {}", k, fmt_f64(cns.constant));
        for (var, g) in &cns.coeffs {
            let _ = writeln!(out, "ecoef {} {} {}", k, var, fmt_f64(*g));
        }
    }
    out
}

/// Parses a dump produced by [`dump`] (or written by hand in decimal floats).
pub fn load(text: &str) -> Result<SdpProblem, SdpError> {
    let mut p = SdpProblem::new(0);
    let mut block_dims: BTreeMap<usize, usize> = BTreeMap::new();
    let mut block_consts: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
    let mut block_coefs: BTreeMap<usize, BTreeMap<usize, Vec<(usize, usize, f64)>>> =
        BTreeMap::new();
    let mut ineqs: BTreeMap<usize, (f64, Vec<(usize, f64)>)> = BTreeMap::new();
    let mut eqs: BTreeMap<usize, (f64, Vec<(usize, f64)>)> = BTreeMap::new();
    let mut saw_header = false;

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let expect = |n: usize| -> Result<(), SdpError> {
            if toks.len() != n {
                Err(SdpError::Parse {
                    line,
                    msg: format!("expected {} tokens, got {}", n, toks.len()),
                })
            } else {
                Ok(())
            }
        };
        match toks[0] {
            "sdp" => {
                expect(2)?;
                saw_header = true;
            }
            "vars" => {
                expect(2)?;
                p.num_vars = parse_usize(toks[1], line)?;
            }
            "obj" => {
                expect(3)?;
                p.objective
                    .push((parse_usize(toks[1], line)?, parse_f64(toks[2], line)?));
            }
            "block" => {
                expect(3)?;
                block_dims.insert(parse_usize(toks[1], line)?, parse_usize(toks[2], line)?);
            }
            "bconst" => {
                expect(5)?;
                block_consts.entry(parse_usize(toks[1], line)?).or_default().push((
                    parse_usize(toks[2], line)?,
                    parse_usize(toks[3], line)?,
                    parse_f64(toks[4], line)?,
                ));
            }
            "bcoef" => {
                expect(6)?;
                block_coefs
                    .entry(parse_usize(toks[1], line)?)
                    .or_default()
                    .entry(parse_usize(toks[2], line)?)
                    .or_default()
                    .push((
                        parse_usize(toks[3], line)?,
                        parse_usize(toks[4], line)?,
                        parse_f64(toks[5], line)?,
                    ));
            }
            "ineq" => {
                expect(3)?;
                ineqs
                    .entry(parse_usize(toks[1], line)?)
                    .or_insert((0.0, Vec::new()))
                    .0 = parse_f64(toks[2], line)?;
            }
            "icoef" => {
                expect(4)?;
                ineqs
                    .entry(parse_usize(toks[1], line)?)
                    .or_insert((0.0, Vec::new()))
                    .1
                    .push((parse_usize(toks[2], line)?, parse_f64(toks[3], line)?));
            }
            "eq" => {
                expect(3)?;
                eqs.entry(parse_usize(toks[1], line)?)
                    .or_insert((0.0, Vec::new()))
                    .0 = parse_f64(toks[2], line)?;
            }
            "ecoef" => {
                expect(4)?;
                eqs.entry(parse_usize(toks[1], line)?)
                    .or_insert((0.0, Vec::new()))
                    .1
                    .push((parse_usize(toks[2], line)?, parse_f64(toks[3], line)?));
            }
            other => {
                return Err(SdpError::Parse {
                    line,
                    msg: format!("unknown record {other:?}"),
                })
            }
        }
    }
    if !saw_header {
        return Err(SdpError::Parse {
            line: 0,
            msg: "missing `sdp` header".into(),
        });
    }
    for (j, dim) in block_dims {
        let mut constant = DMatrix::zeros(dim, dim);
        for (r, c, v) in block_consts.remove(&j).unwrap_or_default() {
            constant[(r, c)] = v;
            constant[(c, r)] = v;
        }
        let mut b = PsdBlock::new(constant);
        for (var, entries) in block_coefs.remove(&j).unwrap_or_default() {
            let mut m = DMatrix::zeros(dim, dim);
            for (r, c, v) in entries {
                m[(r, c)] = v;
                m[(c, r)] = v;
            }
            b.push_coeff(var, m);
        }
        p.psd_blocks.push(b);
    }
    for (_, (c0, coeffs)) in ineqs {
        p.inequalities.push(LinearConstraint::new(c0, coeffs));
    }
    for (_, (c0, coeffs)) in eqs {
        p.equalities.push(LinearConstraint::new(c0, coeffs));
    }
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = SdpProblem::new(3);
        p.set_objective_entry(0, 1.25);
        p.set_objective_entry(2, -0.5);
        let mut b = PsdBlock::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 2.0]));
        b.push_coeff(0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        b.push_coeff(2, DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]));
        p.psd_blocks.push(b);
        p.inequalities
            .push(LinearConstraint::new(1.0, vec![(0, -1.0), (1, -1.0)]));
        p.equalities
            .push(LinearConstraint::new(-0.25, vec![(2, 1.0)]));

        let text = dump(&p);
        let q = load(&text).unwrap();
        assert_eq!(dump(&q), text);
        assert_eq!(q.num_vars, 3);
        assert_eq!(q.psd_blocks.len(), 1);
        assert_eq!(q.psd_blocks[0].coeffs.len(), 2);
        assert_eq!(q.inequalities.len(), 1);
        assert_eq!(q.equalities.len(), 1);
    }

    #[test]
    fn decimal_floats_accepted() {
        let text = "sdp 1\nvars 1\nobj 0 1.5\nineq 0 -1.0\nicoef 0 0 1.0\n";
        let p = load(text).unwrap();
        assert_eq!(p.num_vars, 1);
        assert_eq!(p.inequalities[0].constant, -1.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(load("sdp 1\nvars 1\nfrobnicate 1 2\n").is_err());
        assert!(load("vars 1\n").is_err());
    }
}
