//! Primal-dual interior-point method with Nesterov-Todd scaling.
//!
//! Works on the inequality form of `problem.rs`: slacks `S_j = F_j(x)` live
//! in the PSD cone, scalar inequality slacks in the nonnegative orthant.
//! The method is an infeasible-start path follower with adaptive centering
//! (sigma = (gap_aff/gap)^3): at every iteration one Newton matrix
//!
//! ```text
//!   H[k,i] = sum_j tr(F_jk W_j^-1 F_ji W_j^-1) + sum_r g_rk g_ri z_r/s_r
//! ```
//!
//! is factorized once and reused for the predictor and the centered step.
//! Equalities are eliminated beforehand by restriction to their affine null
//! space, so the core loop only ever sees cones.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::problem::{
    mat_axpy, KktResiduals, LinearConstraint, PsdBlock, SdpError, SdpProblem, SdpSolution,
    SolveStatus,
};

/// Step-length damping (fraction-to-boundary).
const STEP_FRACTION: f64 = 0.98;
/// Static regularization added to the Newton matrix, relative to its trace.
const NEWTON_REG: f64 = 1e-13;

/// Solves `p` to relative gap `tol`, stopping after `max_iter` iterations.
///
/// Deterministic: the same problem always produces the same iterate sequence.
/// `Infeasible`, `Unbounded` and `MaxIter` outcomes are reported through
/// [`SolveStatus`], hard input errors through [`SdpError`].
pub fn solve(p: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    if p.equalities.is_empty() {
        solve_cone_form(p, tol, max_iter)
    } else {
        let (reduced, x0, nullspace) = eliminate_equalities(p)?;
        let mut sol = solve_cone_form(&reduced, tol, max_iter)?;
        let x_full = &x0 + &nullspace * &sol.x;
        sol.objective = p.objective_value(&x_full);
        sol.x = x_full;
        Ok(sol)
    }
}

/// Restricts the problem to the affine solution set of its equalities.
///
/// Returns the reduced problem over null-space coordinates `z`, a particular
/// solution `x0` and an orthonormal null-space basis `N` (`x = x0 + N z`).
fn eliminate_equalities(
    p: &SdpProblem,
) -> Result<(SdpProblem, DVector<f64>, DMatrix<f64>), SdpError> {
    let n = p.num_vars;
    let ne = p.equalities.len();
    let mut e = DMatrix::zeros(ne, n);
    let mut e0 = DVector::zeros(ne);
    for (r, c) in p.equalities.iter().enumerate() {
        e0[r] = c.constant;
        for (i, g) in &c.coeffs {
            e[(r, *i)] += g;
        }
    }
    let svd = e.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let cut = smax * 1e-12;

    // Minimum-norm solution of E x = -e0 and the row-space basis.
    let mut x0 = DVector::zeros(n);
    let mut row_space: Vec<DVector<f64>> = Vec::new();
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if s > cut {
            let v = vt.row(k).transpose();
            x0.axpy(-u.column(k).dot(&e0) / s, &v, 1.0);
            row_space.push(v);
        }
    }
    if (&e * &x0 + &e0).norm() > 1e-8 * (1.0 + e0.norm()) {
        return Err(SdpError::Numerical(
            "equality constraints are mutually inconsistent".into(),
        ));
    }

    // Complete the row-space basis to an orthonormal basis of R^n; the
    // added vectors span the null space. (The thin SVD's V only has
    // min(ne, n) rows, so the null space is built explicitly.)
    let rank = row_space.len();
    let nz = n - rank;
    let mut basis = DMatrix::zeros(n, nz);
    let mut accepted: Vec<DVector<f64>> = Vec::with_capacity(nz);
    for i in 0..n {
        if accepted.len() == nz {
            break;
        }
        let mut v: DVector<f64> = DVector::zeros(n);
        v[i] = 1.0;
        for w in row_space.iter().chain(accepted.iter()) {
            let proj = v.dot(w);
            v.axpy(-proj, w, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            accepted.push(v);
        }
    }
    if accepted.len() != nz {
        return Err(SdpError::Numerical(
            "failed to build equality null-space basis".into(),
        ));
    }
    for (col, v) in accepted.iter().enumerate() {
        basis.column_mut(col).copy_from(v);
    }

    let mut q = SdpProblem::new(nz);
    let cred = basis.transpose() * p.objective_vector();
    for (i, v) in cred.iter().enumerate() {
        if *v != 0.0 {
            q.set_objective_entry(i, *v);
        }
    }
    for b in &p.psd_blocks {
        let mut nb = PsdBlock::new(b.eval(&x0));
        for z in 0..nz {
            let mut m = DMatrix::zeros(b.dim, b.dim);
            for (i, f) in &b.coeffs {
                let w = basis[(*i, z)];
                if w != 0.0 {
                    mat_axpy(&mut m, w, f);
                }
            }
            if m.norm() > 0.0 {
                nb.push_coeff(z, m);
            }
        }
        q.psd_blocks.push(nb);
    }
    for c in &p.inequalities {
        let mut dense = DVector::<f64>::zeros(n);
        for (i, g) in &c.coeffs {
            dense[*i] += g;
        }
        let c0 = c.constant + dense.dot(&x0);
        let red = basis.transpose() * dense;
        let coeffs = red
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        q.inequalities.push(LinearConstraint::new(c0, coeffs));
    }
    Ok((q, x0, basis))
}

/// Internal scaled copy of one PSD block.
struct BlockWork {
    coeffs: Vec<(usize, DMatrix<f64>)>,
    constant: DMatrix<f64>,
    scale: f64,
    dim: usize,
}

/// Internal scaled copy of one scalar inequality.
struct LinWork {
    constant: f64,
    coeffs: Vec<(usize, f64)>,
    scale: f64,
}

fn chol_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l())
}

/// `M^(-1/2)` of an SPD matrix via eigendecomposition; `None` if not PD.
fn inv_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let mut q = eig.eigenvectors.clone();
    for (i, mut col) in q.column_iter_mut().enumerate() {
        let ev = eig.eigenvalues[i];
        if ev <= 0.0 {
            return None;
        }
        col /= ev.sqrt();
    }
    Some(&q * eig.eigenvectors.transpose())
}

/// Largest step in [0, 1] keeping `S + alpha dS` PSD, given `chol(S)`.
fn max_step_psd(s_chol: &DMatrix<f64>, ds: &DMatrix<f64>) -> f64 {
    let li = match s_chol.clone().try_inverse() {
        Some(li) => li,
        None => return 0.0,
    };
    let t = &li * ds * li.transpose();
    let lmin = SymmetricEigen::new(t).eigenvalues.min();
    if lmin >= -1e-300 {
        1.0
    } else {
        (1.0 / -lmin).min(1.0)
    }
}

/// Forces exact symmetry (iterates drift by rounding in triple products).
fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

fn sym_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

struct Direction {
    dx: DVector<f64>,
    ds_psd: Vec<DMatrix<f64>>,
    dz_psd: Vec<DMatrix<f64>>,
    ds_lin: DVector<f64>,
    dz_lin: DVector<f64>,
}

fn solve_cone_form(p: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution, SdpError> {
    let n = p.num_vars;
    let cvec = p.objective_vector();
    let c_scale = 1.0 / cvec.amax().max(1.0);
    let c = &cvec * c_scale;

    let blocks: Vec<BlockWork> = p
        .psd_blocks
        .iter()
        .map(|b| {
            let scale = 1.0 / b.constant.norm().max(1.0);
            BlockWork {
                coeffs: b.coeffs.iter().map(|(i, f)| (*i, f * scale)).collect(),
                constant: &b.constant * scale,
                scale,
                dim: b.dim,
            }
        })
        .collect();
    let lin: Vec<LinWork> = p
        .inequalities
        .iter()
        .map(|cns| {
            let mag = cns
                .coeffs
                .iter()
                .map(|(_, g)| g.abs())
                .fold(cns.constant.abs(), f64::max)
                .max(1e-12);
            let s = 1.0 / mag;
            LinWork {
                constant: cns.constant * s,
                coeffs: cns.coeffs.iter().map(|(i, g)| (*i, g * s)).collect(),
                scale: s,
            }
        })
        .collect();

    let nb = blocks.len();
    let nl = lin.len();
    let degree: f64 = blocks.iter().map(|b| b.dim as f64).sum::<f64>() + nl as f64;

    let mut x = DVector::<f64>::zeros(n);
    let mut s_psd: Vec<DMatrix<f64>> =
        blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim)).collect();
    let mut z_psd: Vec<DMatrix<f64>> = s_psd.clone();
    let mut s_lin = DVector::from_element(nl, 1.0);
    let mut z_lin = DVector::from_element(nl, 1.0);

    let mut status = SolveStatus::MaxIter;
    let mut iterations = max_iter;

    for iter in 0..max_iter {
        // Residuals: P_j = F_j(x) - S_j, p_lin likewise, r_d = c - A*(Z) - G'z.
        let p_res: Vec<DMatrix<f64>> = blocks
            .iter()
            .zip(&s_psd)
            .map(|(b, s)| {
                let mut m = b.constant.clone();
                for (i, f) in &b.coeffs {
                    mat_axpy(&mut m, x[*i], f);
                }
                m -= s;
                m
            })
            .collect();
        let p_lin = DVector::from_fn(nl, |r, _| {
            let w = &lin[r];
            w.constant + w.coeffs.iter().map(|(i, g)| g * x[*i]).sum::<f64>() - s_lin[r]
        });
        let mut r_d = c.clone();
        for (b, z) in blocks.iter().zip(&z_psd) {
            for (i, f) in &b.coeffs {
                r_d[*i] -= sym_dot(z, f);
            }
        }
        for (w, zr) in lin.iter().zip(z_lin.iter()) {
            for (i, g) in &w.coeffs {
                r_d[*i] -= g * zr;
            }
        }

        let gap: f64 = s_psd
            .iter()
            .zip(&z_psd)
            .map(|(s, z)| sym_dot(s, z))
            .sum::<f64>()
            + s_lin.dot(&z_lin);
        let mu = gap / degree;
        let pobj = c.dot(&x);
        let dual_const: f64 = blocks
            .iter()
            .zip(&z_psd)
            .map(|(b, z)| sym_dot(&b.constant, z))
            .sum::<f64>()
            + lin
                .iter()
                .zip(z_lin.iter())
                .map(|(w, zr)| w.constant * zr)
                .sum::<f64>();
        let dobj = -dual_const;
        let rel_gap = gap / (1.0 + pobj.abs() + dobj.abs());
        let pres = p_res
            .iter()
            .map(|m| m.norm())
            .fold(0.0, f64::max)
            .max(if nl > 0 { p_lin.amax() } else { 0.0 });
        let dres = r_d.amax();

        if std::env::var_os("SDP_TRACE").is_some() {
            eprintln!(
                "iter {iter:3}  mu {mu:9.2e}  relgap {rel_gap:9.2e}  pres {pres:9.2e}  dres {dres:9.2e}  pobj {pobj:12.5e}"
            );
        }
        let feas_tol = tol.max(1e-9);
        if rel_gap <= tol && pres <= feas_tol && dres <= feas_tol {
            status = SolveStatus::Optimal;
            iterations = iter;
            break;
        }

        // Primal infeasibility certificate: Z >= 0, A*(Z) + G'z ~ 0 and
        // <F_0, Z> + g_0'z < 0 proves the cone constraints cannot be met.
        let z_norm: f64 = z_psd.iter().map(|z| z.trace()).sum::<f64>() + z_lin.sum();
        if z_norm > 10.0 {
            let mut adj = DVector::<f64>::zeros(n);
            for (b, z) in blocks.iter().zip(&z_psd) {
                for (i, f) in &b.coeffs {
                    adj[*i] += sym_dot(z, f);
                }
            }
            for (w, zr) in lin.iter().zip(z_lin.iter()) {
                for (i, g) in &w.coeffs {
                    adj[*i] += g * zr;
                }
            }
            let ray_res = adj.amax() / z_norm;
            let ray_obj = dual_const / z_norm;
            if ray_obj < -1e-7 && ray_res < 1e-8 {
                status = SolveStatus::Infeasible;
                iterations = iter;
                break;
            }
        }
        // Unboundedness: objective diverging while essentially feasible.
        if pobj < -1e9 && pres <= 1e-6 {
            status = SolveStatus::Unbounded;
            iterations = iter;
            break;
        }

        // NT scaling per block: W^-1 = G_z (G_z' S G_z)^(-1/2) G_z', where
        // G_s, G_z are Cholesky factors of S and Z.
        let mut w_inv: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut z_inv: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut s_chols: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut z_chols: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut breakdown = false;
        for (s, z) in s_psd.iter().zip(&z_psd) {
            let (Some(gs), Some(gz)) = (chol_lower(s), chol_lower(z)) else {
                breakdown = true;
                break;
            };
            let m = gz.transpose() * s * &gz;
            let Some(mis) = inv_sqrt(&m) else {
                breakdown = true;
                break;
            };
            w_inv.push(&gz * mis * gz.transpose());
            match z.clone().cholesky() {
                Some(ch) => z_inv.push(ch.inverse()),
                None => {
                    breakdown = true;
                    break;
                }
            }
            s_chols.push(gs);
            z_chols.push(gz);
        }
        if breakdown {
            iterations = iter;
            break;
        }

        // Newton matrix, shared by both directions of this iteration.
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (b, wi) in blocks.iter().zip(&w_inv) {
            let scaled: Vec<(usize, DMatrix<f64>)> = b
                .coeffs
                .iter()
                .map(|(i, f)| (*i, wi * f * wi))
                .collect();
            for (a, (i, m_i)) in scaled.iter().enumerate() {
                for (k, f_k) in &b.coeffs[a..] {
                    let v = sym_dot(f_k, m_i);
                    h[(*k, *i)] += v;
                    if k != i {
                        h[(*i, *k)] += v;
                    }
                }
            }
        }
        for (w, (sr, zr)) in lin.iter().zip(s_lin.iter().zip(z_lin.iter())) {
            let w2 = zr / sr;
            for (a, (i, gi)) in w.coeffs.iter().enumerate() {
                for (k, gk) in &w.coeffs[a..] {
                    let v = gi * gk * w2;
                    h[(*k, *i)] += v;
                    if k != i {
                        h[(*i, *k)] += v;
                    }
                }
            }
        }
        let reg = NEWTON_REG * h.trace().max(1.0) / n.max(1) as f64;
        for i in 0..n {
            h[(i, i)] += reg;
        }
        let Some(h_chol) = h.cholesky() else {
            iterations = iter;
            break;
        };

        let direction = |tau: f64| -> Direction {
            let mut rhs = DVector::<f64>::zeros(n);
            let mut r_c: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
            for (j, b) in blocks.iter().enumerate() {
                let mut r = -&s_psd[j];
                if tau > 0.0 {
                    mat_axpy(&mut r, tau, &z_inv[j]);
                }
                let u = &w_inv[j] * (&r - &p_res[j]) * &w_inv[j];
                for (i, f) in &b.coeffs {
                    rhs[*i] += sym_dot(f, &u);
                }
                r_c.push(r);
            }
            for (r, w) in lin.iter().enumerate() {
                let rr = if tau > 0.0 {
                    tau / z_lin[r] - s_lin[r]
                } else {
                    -s_lin[r]
                };
                let u = (rr - p_lin[r]) * z_lin[r] / s_lin[r];
                for (i, g) in &w.coeffs {
                    rhs[*i] += g * u;
                }
            }
            rhs -= &r_d;
            let mut dx = h_chol.solve(&rhs);
            let expand = |dx: &DVector<f64>| {
                let mut ds_psd = Vec::with_capacity(nb);
                let mut dz_psd = Vec::with_capacity(nb);
                for (j, b) in blocks.iter().enumerate() {
                    let mut ds = p_res[j].clone();
                    for (i, f) in &b.coeffs {
                        mat_axpy(&mut ds, dx[*i], f);
                    }
                    let dz = &w_inv[j] * (&r_c[j] - &ds) * &w_inv[j];
                    ds_psd.push(ds);
                    dz_psd.push(dz);
                }
                let mut ds_lin = DVector::zeros(nl);
                let mut dz_lin = DVector::zeros(nl);
                for (r, w) in lin.iter().enumerate() {
                    let mut ds = p_lin[r];
                    for (i, g) in &w.coeffs {
                        ds += g * dx[*i];
                    }
                    let rr = if tau > 0.0 {
                        tau / z_lin[r] - s_lin[r]
                    } else {
                        -s_lin[r]
                    };
                    ds_lin[r] = ds;
                    dz_lin[r] = (rr - ds) * z_lin[r] / s_lin[r];
                }
                (ds_psd, dz_psd, ds_lin, dz_lin)
            };
            let (mut ds_psd, mut dz_psd, mut ds_lin, mut dz_lin) = expand(&dx);
            // Additive refinement of the stationarity equation: rounding in
            // W^-1 (entries ~ mu^-1/2) otherwise stalls the dual residual.
            // The correction (ex, eS, eZ) keeps dS consistent with dx and is
            // small enough that its own rounding is negligible.
            for _ in 0..2 {
                let mut r2 = r_d.clone();
                for (b, dz) in blocks.iter().zip(&dz_psd) {
                    for (i, f) in &b.coeffs {
                        r2[*i] -= sym_dot(dz, f);
                    }
                }
                for (w, dzr) in lin.iter().zip(dz_lin.iter()) {
                    for (i, g) in &w.coeffs {
                        r2[*i] -= g * dzr;
                    }
                }
                if r2.amax() <= 1e-14 * (1.0 + r_d.amax()) {
                    break;
                }
                let ex = -h_chol.solve(&r2);
                for (j, b) in blocks.iter().enumerate() {
                    let mut es = DMatrix::zeros(b.dim, b.dim);
                    for (i, f) in &b.coeffs {
                        mat_axpy(&mut es, ex[*i], f);
                    }
                    let ez = -(&w_inv[j] * &es * &w_inv[j]);
                    mat_axpy(&mut ds_psd[j], 1.0, &es);
                    mat_axpy(&mut dz_psd[j], 1.0, &ez);
                }
                for (r, w) in lin.iter().enumerate() {
                    let mut eds = 0.0;
                    for (i, g) in &w.coeffs {
                        eds += g * ex[*i];
                    }
                    ds_lin[r] += eds;
                    dz_lin[r] -= eds * z_lin[r] / s_lin[r];
                }
                dx += &ex;
            }
            Direction {
                dx,
                ds_psd,
                dz_psd,
                ds_lin,
                dz_lin,
            }
        };

        let step_lengths = |d: &Direction| -> (f64, f64) {
            let mut ap: f64 = 1.0;
            let mut ad: f64 = 1.0;
            for j in 0..nb {
                ap = ap.min(max_step_psd(&s_chols[j], &d.ds_psd[j]));
                ad = ad.min(max_step_psd(&z_chols[j], &d.dz_psd[j]));
            }
            for r in 0..nl {
                if d.ds_lin[r] < 0.0 {
                    ap = ap.min(-s_lin[r] / d.ds_lin[r]);
                }
                if d.dz_lin[r] < 0.0 {
                    ad = ad.min(-z_lin[r] / d.dz_lin[r]);
                }
            }
            let mut ap = (STEP_FRACTION * ap).min(1.0);
            let mut ad = (STEP_FRACTION * ad).min(1.0);
            // The eigenvalue bound can overshoot at high condition numbers;
            // certify each step with an actual factorization attempt.
            let chol_ok = |m: &DMatrix<f64>, dm: &DMatrix<f64>, a: f64| {
                let mut cand = m.clone();
                mat_axpy(&mut cand, a, dm);
                symmetrize(&mut cand);
                cand.cholesky().is_some()
            };
            for _ in 0..40 {
                if s_psd.iter().zip(&d.ds_psd).all(|(s, ds)| chol_ok(s, ds, ap)) {
                    break;
                }
                ap *= 0.8;
            }
            for _ in 0..40 {
                if z_psd.iter().zip(&d.dz_psd).all(|(z, dz)| chol_ok(z, dz, ad)) {
                    break;
                }
                ad *= 0.8;
            }
            (ap, ad)
        };

        // Predictor, then adaptively centered step.
        let aff = direction(0.0);
        let (ap_a, ad_a) = step_lengths(&aff);
        let mut gap_aff = 0.0;
        for j in 0..nb {
            let s_n = &s_psd[j] + &aff.ds_psd[j] * ap_a;
            let z_n = &z_psd[j] + &aff.dz_psd[j] * ad_a;
            gap_aff += sym_dot(&s_n, &z_n);
        }
        for r in 0..nl {
            gap_aff += (s_lin[r] + ap_a * aff.ds_lin[r]) * (z_lin[r] + ad_a * aff.dz_lin[r]);
        }
        let sigma = (gap_aff / gap).max(0.0).powi(3).clamp(1e-8, 0.999999);

        let step = direction(sigma * mu);
        let (ap, ad) = step_lengths(&step);

        x.axpy(ap, &step.dx, 1.0);
        for j in 0..nb {
            mat_axpy(&mut s_psd[j], ap, &step.ds_psd[j]);
            mat_axpy(&mut z_psd[j], ad, &step.dz_psd[j]);
            symmetrize(&mut s_psd[j]);
            symmetrize(&mut z_psd[j]);
        }
        s_lin.axpy(ap, &step.ds_lin, 1.0);
        z_lin.axpy(ad, &step.dz_lin, 1.0);
    }

    // Report in original (unscaled) units.
    let psd_duals: Vec<DMatrix<f64>> = blocks
        .iter()
        .zip(&z_psd)
        .map(|(b, z)| z * (b.scale / c_scale))
        .collect();
    let ineq_duals = DVector::from_fn(nl, |r, _| z_lin[r] * lin[r].scale / c_scale);
    let gap: f64 = (s_psd
        .iter()
        .zip(&z_psd)
        .map(|(s, z)| sym_dot(s, z))
        .sum::<f64>()
        + s_lin.dot(&z_lin))
        / c_scale;
    let pobj = c.dot(&x);
    let dobj = -blocks
        .iter()
        .zip(&z_psd)
        .map(|(b, z)| sym_dot(&b.constant, z))
        .sum::<f64>()
        - lin
            .iter()
            .zip(z_lin.iter())
            .map(|(w, zr)| w.constant * zr)
            .sum::<f64>();
    Ok(SdpSolution {
        status,
        objective: p.objective_value(&x),
        relative_gap: gap * c_scale / (1.0 + pobj.abs() + dobj.abs()),
        x,
        psd_duals,
        ineq_duals,
        gap,
        iterations,
    })
}

/// Recomputes feasibility, stationarity and complementarity for a candidate
/// solution, independently of the solver's internal bookkeeping.
pub fn kkt_residuals(p: &SdpProblem, sol: &SdpSolution) -> KktResiduals {
    let mut min_block_eig = f64::INFINITY;
    let mut complementarity = 0.0;
    let mut min_dual_eig = f64::INFINITY;
    for (b, z) in p.psd_blocks.iter().zip(&sol.psd_duals) {
        let f = b.eval(&sol.x);
        min_block_eig = min_block_eig.min(SymmetricEigen::new(f.clone()).eigenvalues.min());
        min_dual_eig = min_dual_eig.min(SymmetricEigen::new(z.clone()).eigenvalues.min());
        complementarity += sym_dot(&f, z);
    }
    let mut min_inequality = f64::INFINITY;
    for (r, cns) in p.inequalities.iter().enumerate() {
        let v = cns.eval(&sol.x);
        min_inequality = min_inequality.min(v);
        if r < sol.ineq_duals.len() {
            complementarity += v * sol.ineq_duals[r];
            min_dual_eig = min_dual_eig.min(sol.ineq_duals[r]);
        }
    }
    let mut max_equality_violation: f64 = 0.0;
    for cns in &p.equalities {
        max_equality_violation = max_equality_violation.max(cns.eval(&sol.x).abs());
    }
    let mut r_d = p.objective_vector();
    for (b, z) in p.psd_blocks.iter().zip(&sol.psd_duals) {
        for (i, f) in &b.coeffs {
            r_d[*i] -= sym_dot(z, f);
        }
    }
    for (r, cns) in p.inequalities.iter().enumerate() {
        if r < sol.ineq_duals.len() {
            for (i, g) in &cns.coeffs {
                r_d[*i] -= g * sol.ineq_duals[r];
            }
        }
    }
    if !p.equalities.is_empty() {
        // The equality multipliers are implicit; measure stationarity in the
        // orthogonal complement of the equality row space.
        let n = p.num_vars;
        let ne = p.equalities.len();
        let mut e = DMatrix::zeros(ne, n);
        for (r, cns) in p.equalities.iter().enumerate() {
            for (i, g) in &cns.coeffs {
                e[(r, *i)] += g;
            }
        }
        let svd = e.svd(false, true);
        let vt = svd.v_t.unwrap();
        let smax = svd.singular_values.max();
        for k in 0..svd.singular_values.len() {
            if svd.singular_values[k] > smax * 1e-12 {
                let row = vt.row(k).transpose();
                let proj = r_d.dot(&row);
                r_d.axpy(-proj, &row, 1.0);
            }
        }
    }
    KktResiduals {
        min_block_eig: if min_block_eig.is_finite() {
            min_block_eig
        } else {
            0.0
        },
        min_inequality: if min_inequality.is_finite() {
            min_inequality
        } else {
            0.0
        },
        max_equality_violation,
        dual_residual: r_d.amax(),
        complementarity,
        min_dual_eig: if min_dual_eig.is_finite() {
            min_dual_eig
        } else {
            0.0
        },
    }
}
