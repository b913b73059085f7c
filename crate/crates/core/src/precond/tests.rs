use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::krylov::{pcg_solve, PcgConfig};
use crate::linalg::{seeded_gaussian, DenseMatrix, LinearOperator};
use crate::problem::{Linearization, ScaledIdentity};

type Dense = Vec<Vec<f64>>;

fn reg(n: usize, c: f64) -> Arc<dyn Regularization> {
    Arc::new(ScaledIdentity { dim: n, scale: c })
}

fn dense_eye(n: usize, c: f64) -> Dense {
    (0..n).map(|i| (0..n).map(|j| if i == j { c } else { 0.0 }).collect()).collect()
}

fn mul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn outer_sum(n: usize, cols_a: &[Vector], cols_b: &[Vector], w: &[f64]) -> Dense {
    let mut out = vec![vec![0.0; n]; n];
    for ((a, b), &c) in cols_a.iter().zip(cols_b).zip(w) {
        for i in 0..n {
            for j in 0..n {
                out[i][j] += c * a[i] * b[j];
            }
        }
    }
    out
}

/// Textbook sandwich with explicit matrices.
fn dense_update(e: &Dense, p: &[Vector], w: &[Vector], d: &[f64]) -> Dense {
    let n = e.len();
    let inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
    let mut left = dense_eye(n, 1.0);
    let pw = outer_sum(n, p, w, &inv);
    let mut right = dense_eye(n, 1.0);
    let wp = outer_sum(n, w, p, &inv);
    let pp = outer_sum(n, p, p, &inv);
    for i in 0..n {
        for j in 0..n {
            left[i][j] -= pw[i][j];
            right[i][j] -= wp[i][j];
        }
    }
    let mut out = mul(&mul(&left, e), &right);
    for i in 0..n {
        for j in 0..n {
            out[i][j] += pp[i][j];
        }
    }
    out
}

fn dense_apply(e: &Dense, v: &Vector) -> Vec<f64> {
    e.iter().map(|row| row.iter().zip(v.iter()).map(|(a, b)| a * b).sum()).collect()
}

fn spd_matrix(n: usize, seed: u64, cond: f64) -> DenseMatrix {
    let mut q: Vec<Vector> = Vec::new();
    for k in 0..n {
        let mut v = seeded_gaussian(n, seed + k as u64);
        for u in &q {
            let a = u.dot(&v);
            v.axpy(-a, u);
        }
        let nrm = v.norm();
        v.scale(1.0 / nrm);
        q.push(v);
    }
    let lam: Vec<f64> = (0..n)
        .map(|i| cond.powf(i as f64 / (n - 1).max(1) as f64))
        .collect();
    DenseMatrix::from_fn(n, |i, j| (0..n).map(|k| q[k][i] * lam[k] * q[k][j]).sum())
}

fn state(n: usize, c: f64) -> PreconditionerState {
    PreconditionerState::from_regularization(reg(n, c))
}

#[test]
fn empty_ledger_is_regularization_inverse() {
    let e = state(4, 2.0);
    let r = seeded_gaussian(4, 3);
    let out = e.apply(&r).unwrap();
    for i in 0..4 {
        assert!((out[i] - r[i] / 2.0).abs() < 1e-15);
    }
    assert_eq!(e.stored_vector_count(), 0);
}

#[test]
fn parametric_update_satisfies_secant() {
    let mut e = state(6, 1.0);
    let z = seeded_gaussian(6, 1);
    let mut y = z.scaled(3.0);
    y.axpy(0.5, &seeded_gaussian(6, 2));
    assert!(y.dot(&z) > 0.0);
    let out = e.push_secant_pair(z.clone(), y.clone()).unwrap();
    assert_eq!(out, UpdateOutcome::Applied { rank: 1 });
    let ey = e.apply(&y).unwrap();
    assert!(ey.sub(&z).norm() <= 1e-10 * z.norm());
    assert_eq!(e.stored_vector_count(), 2);
}

#[test]
fn parametric_update_from_iterates() {
    let mut e = state(3, 1.0);
    let m0 = Vector::zeros(3);
    let m1 = Vector::new(vec![1.0, 0.0, 0.0]).unwrap();
    let g0 = Vector::zeros(3);
    let g1 = Vector::new(vec![2.0, 0.5, 0.0]).unwrap();
    let gp = Vector::new(vec![0.0, 0.5, 0.0]).unwrap();
    e.parametric_update(&m0, &m1, &g0, &g1, &gp).unwrap();
    // y = (2, 0, 0), z = (1, 0, 0): E y = z.
    let ey = e.apply(&Vector::new(vec![2.0, 0.0, 0.0]).unwrap()).unwrap();
    assert!((ey[0] - 1.0).abs() < 1e-15 && ey[1].abs() < 1e-15);
}

#[test]
fn parametric_update_skips_negative_curvature() {
    let mut e = state(3, 1.0);
    let z = Vector::new(vec![1.0, 0.0, 0.0]).unwrap();
    let y = Vector::new(vec![-1.0, 1.0, 0.0]).unwrap();
    let before = e.apply(&y).unwrap();
    assert_eq!(e.push_secant_pair(z, y.clone()).unwrap(), UpdateOutcome::SkippedCurvature);
    assert!(e.ledger().is_empty());
    assert_eq!(e.apply(&y).unwrap(), before);
}

#[test]
fn parametric_update_skips_orthogonal_pair() {
    let mut e = state(2, 1.0);
    let z = Vector::new(vec![1.0, 0.0]).unwrap();
    let y = Vector::new(vec![0.0, 1.0]).unwrap();
    assert_eq!(e.push_secant_pair(z, y).unwrap(), UpdateOutcome::SkippedCurvature);
}

fn pcg_pairs(h: &DenseMatrix, e: &PreconditionerState, seed: u64, cap: usize) -> (Vec<Vector>, Vec<Vector>) {
    let b = seeded_gaussian(h.dim(), seed);
    let cfg = PcgConfig {
        eps_cg: 1e-10,
        record_cap: cap,
        ..PcgConfig::default()
    };
    let res = pcg_solve(h, &b, e, &cfg).unwrap();
    (res.pairs_p, res.pairs_w)
}

#[test]
fn block_update_satisfies_rotated_secant() {
    let n = 20;
    let h = spd_matrix(n, 100, 50.0);
    let mut e = state(n, 1.0);
    let (p, w) = pcg_pairs(&h, &e, 7, 8);
    let out = e.block_update(&p, &w, DEFAULT_TAU, 8).unwrap();
    assert_eq!(out, UpdateOutcome::Applied { rank: 8 });
    let QnUpdate::Block { p, w, d } = e.ledger()[0].clone() else {
        panic!("expected block record");
    };
    for i in 1..d.len() {
        assert!(d[i - 1] >= d[i]);
    }
    let res = block_secant_residual(&e, &p, &w).unwrap();
    assert!(res <= 1e-8, "secant residual {res}");
    // Rotated pairs stay H-conjugate.
    for i in 0..p.len() {
        for j in 0..i {
            assert!(p[i].dot(&w[j]).abs() <= 1e-8 * (d[i] * d[j]).sqrt());
        }
    }
}

#[test]
fn block_update_keeps_largest_curvatures() {
    let n = 3;
    let p: Vec<Vector> = (0..3).map(|i| Vector::basis(n, i)).collect();
    let w: Vec<Vector> = [1.0, 5.0, 3.0]
        .iter()
        .enumerate()
        .map(|(i, &c)| Vector::basis(n, i).scaled(c))
        .collect();
    let mut e = state(n, 1.0);
    assert_eq!(e.block_update(&p, &w, 0.0, 2).unwrap(), UpdateOutcome::Applied { rank: 2 });
    let QnUpdate::Block { d, .. } = &e.ledger()[0] else {
        panic!()
    };
    assert_eq!(d, &vec![5.0, 3.0]);
    assert_eq!(e.stored_vector_count(), 4);
}

#[test]
fn block_update_drops_weak_column() {
    let n = 3;
    let p = vec![Vector::basis(n, 0), Vector::basis(n, 1)];
    let w = vec![Vector::basis(n, 0).scaled(1e-9), Vector::basis(n, 1).scaled(2.0)];
    let mut e = state(n, 1.0);
    assert_eq!(e.block_update(&p, &w, 1e-6, 5).unwrap(), UpdateOutcome::Applied { rank: 1 });
    let QnUpdate::Block { d, .. } = &e.ledger()[0] else {
        panic!()
    };
    assert_eq!(d, &vec![2.0]);
}

#[test]
fn block_update_with_nothing_to_keep() {
    let n = 2;
    let p = vec![Vector::basis(n, 0)];
    let w = vec![Vector::basis(n, 0).scaled(-1.0)];
    let mut e = state(n, 1.0);
    assert_eq!(e.block_update(&p, &w, 0.0, 3).unwrap(), UpdateOutcome::Unchanged);
    assert_eq!(e.block_update(&[], &[], 0.0, 3).unwrap(), UpdateOutcome::Unchanged);
    let w = vec![Vector::basis(n, 0)];
    assert_eq!(e.block_update(&p, &w, 0.0, 0).unwrap(), UpdateOutcome::Unchanged);
    assert!(e.ledger().is_empty());
}

#[test]
fn block_update_rejects_asymmetric_pairs() {
    let n = 2;
    let p = vec![Vector::basis(n, 0), Vector::basis(n, 1)];
    // P^T W = [[1, 1], [0, 1]].
    let w = vec![
        Vector::basis(n, 0),
        Vector::new(vec![1.0, 1.0]).unwrap(),
    ];
    let mut e = state(n, 1.0);
    assert!(matches!(e.block_update(&p, &w, 0.0, 2), Err(Error::Asymmetry { .. })));
}

#[test]
fn block_update_rotation_recovers_indefinite_mixture() {
    // D = [[1, 2], [2, 1]] has eigenvalues 3 and -1; only the positive one survives.
    let n = 2;
    let p = vec![Vector::basis(n, 0), Vector::basis(n, 1)];
    let w = vec![
        Vector::new(vec![1.0, 2.0]).unwrap(),
        Vector::new(vec![2.0, 1.0]).unwrap(),
    ];
    let mut e = state(n, 1.0);
    assert_eq!(e.block_update(&p, &w, 0.0, 2).unwrap(), UpdateOutcome::Applied { rank: 1 });
    let QnUpdate::Block { d, .. } = &e.ledger()[0] else {
        panic!()
    };
    assert!((d[0] - 3.0).abs() < 1e-12);
    assert!(min_rayleigh_quotient(&e, 10, 1).unwrap() > 0.0);
}

#[test]
fn dimension_mismatch_is_reported() {
    let mut e = state(3, 1.0);
    assert!(matches!(
        e.block_update(&[Vector::zeros(2)], &[Vector::zeros(2)], 0.0, 1),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(e.apply(&Vector::zeros(4)).is_err());
}

#[test]
fn storage_cap_is_enforced() {
    let mut e = state(3, 1.0).with_storage_cap(3);
    let z = Vector::basis(3, 0);
    e.push_secant_pair(z.clone(), z.clone()).unwrap();
    let err = e.push_secant_pair(Vector::basis(3, 1), Vector::basis(3, 1));
    assert_eq!(err, Err(Error::StorageExceeded { cap: 3, requested: 4 }));
    assert_eq!(e.ledger().len(), 1);
}

#[test]
fn matches_dense_assembly_at_order_twelve() {
    let n = 12;
    let h = spd_matrix(n, 400, 30.0);
    let c = 0.7;
    let mut e = state(n, c);
    let mut dense = dense_eye(n, 1.0 / c);

    let z = seeded_gaussian(n, 11);
    let y = h.apply(&z).unwrap();
    e.push_secant_pair(z.clone(), y.clone()).unwrap();
    dense = dense_update(&dense, &[z.clone()], &[y.clone()], &[y.dot(&z)]);

    let (p, w) = pcg_pairs(&h, &e, 12, 5);
    e.block_update(&p, &w, DEFAULT_TAU, 4).unwrap();
    let QnUpdate::Block { p, w, d } = e.ledger()[1].clone() else {
        panic!()
    };
    dense = dense_update(&dense, &p, &w, &d);

    let z2 = seeded_gaussian(n, 13);
    let y2 = h.apply(&z2).unwrap();
    e.push_secant_pair(z2.clone(), y2.clone()).unwrap();
    let yz2 = y2.dot(&z2);
    dense = dense_update(&dense, &[z2], &[y2], &[yz2]);

    let scale = dense.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
    for k in 0..n {
        let ek = Vector::basis(n, k);
        let got = e.apply(&ek).unwrap();
        let want = dense_apply(&dense, &ek);
        for i in 0..n {
            assert!((got[i] - want[i]).abs() <= 1e-12 * scale, "entry ({i},{k})");
        }
    }
}

#[test]
fn iterated_block_updates_reach_perfect_preconditioner() {
    let n = 30;
    let h = spd_matrix(n, 900, 1e3);
    let mut e = state(n, 1.0);
    let cfg = PcgConfig::with_tolerance(1e-6);
    for round in 0..3 {
        let res = pcg_solve(&h, &seeded_gaussian(n, 5 + round), &e, &cfg).unwrap();
        assert!(res.converged());
        e.block_update(&res.pairs_p, &res.pairs_w, 0.0, n).unwrap();
    }
    let again = pcg_solve(&h, &seeded_gaussian(n, 5), &e, &cfg).unwrap();
    assert!(again.iters <= 2, "repeat solve took {}", again.iters);
}

#[test]
fn sidecar_roundtrip_is_exact() {
    let n = 8;
    let h = spd_matrix(n, 77, 10.0);
    let r = reg(n, 1.5);
    let mut e = PreconditionerState::from_regularization(r.clone());
    let z = seeded_gaussian(n, 1);
    e.push_secant_pair(z.clone(), h.apply(&z).unwrap()).unwrap();
    let (p, w) = pcg_pairs(&h, &e, 2, 4);
    e.block_update(&p, &w, DEFAULT_TAU, 3).unwrap();

    let mut buf = Vec::new();
    e.write_sidecar(&mut buf).unwrap();
    let solve: RegSolve = Arc::new(move |v: &Vector| r.solve(v));
    let back = PreconditionerState::read_sidecar(buf.as_slice(), solve).unwrap();
    assert_eq!(back.ledger(), e.ledger());
    let probe = seeded_gaussian(n, 9);
    assert_eq!(back.apply(&probe).unwrap(), e.apply(&probe).unwrap());

    buf[0] = b'X';
    let solve: RegSolve = Arc::new(|v: &Vector| Ok(v.clone()));
    assert!(PreconditionerState::read_sidecar(buf.as_slice(), solve).is_err());
}

struct DenseMisfit {
    hm: DenseMatrix,
    c: f64,
    g: Vector,
}

impl Linearization for DenseMisfit {
    fn objective(&self) -> f64 {
        0.0
    }
    fn gradient(&self) -> &Vector {
        &self.g
    }
    fn mixed_apply(&self, dtheta: &Vector) -> crate::Result<Vector> {
        Ok(dtheta.clone())
    }
    fn hess_apply(&self, p: &Vector) -> crate::Result<Vector> {
        Ok(self.hm.apply(p)?.add(&p.scaled(self.c)))
    }
    fn misfit_hess_apply(&self, p: &Vector) -> crate::Result<Vector> {
        self.hm.apply(p)
    }
}

fn low_rank_misfit(n: usize, eigs: &[f64]) -> DenseMatrix {
    let mut cols = Vec::new();
    for k in 0..eigs.len() {
        let mut v = seeded_gaussian(n, 300 + k as u64);
        for u in &cols {
            let a = Vector::dot(u, &v);
            v.axpy(-a, u);
        }
        let nrm = v.norm();
        v.scale(1.0 / nrm);
        cols.push(v);
    }
    DenseMatrix::from_fn(n, |i, j| (0..eigs.len()).map(|k| eigs[k] * cols[k][i] * cols[k][j]).sum())
}

#[test]
fn lowrank_start_inverts_captured_subspace() {
    let n = 25;
    let c = 0.5;
    let eigs = [400.0, 90.0, 30.0, 8.0];
    let lin = DenseMisfit {
        hm: low_rank_misfit(n, &eigs),
        c,
        g: Vector::zeros(n),
    };
    let (e, report) = init_lowrank_from(&lin, reg(n, c), 4, 17, LowRankOptions::default()).unwrap();
    for (got, want) in report.eigenvalues.iter().zip(eigs) {
        assert!((got - want / c).abs() <= 1e-8 * want / c, "{got} vs {}", want / c);
    }
    assert!(report.hess_applies <= 4 * 9);
    // E_0 (H_M + R) v = v for v in span(V).
    for v in e.base().basis() {
        let hv = lin.hess_apply(v).unwrap();
        let back = e.apply(&hv).unwrap();
        assert!(back.sub(v).norm() <= 1e-8 * v.norm());
    }
    assert_eq!(e.stored_vector_count(), 4);
}

#[test]
fn lowrank_zero_misfit_gives_plain_regularization() {
    let n = 10;
    let lin = DenseMisfit {
        hm: DenseMatrix::from_fn(n, |_, _| 0.0),
        c: 2.0,
        g: Vector::zeros(n),
    };
    let (e, report) = init_lowrank_from(&lin, reg(n, 2.0), 3, 1, LowRankOptions::default()).unwrap();
    assert_eq!(report.eigenvalues, vec![0.0; 3]);
    assert!(e.base().gamma().iter().all(|&g| g == 0.0));
    let r = seeded_gaussian(n, 4);
    assert!(e.apply(&r).unwrap().sub(&r.scaled(0.5)).norm() < 1e-14);
}

#[test]
fn lowrank_rank_deficiency_is_reported() {
    let n = 10;
    let lin = DenseMisfit {
        hm: low_rank_misfit(n, &[5.0, 2.0]),
        c: 1.0,
        g: Vector::zeros(n),
    };
    let err = init_lowrank_from(&lin, reg(n, 1.0), 4, 1, LowRankOptions::default()).unwrap_err();
    assert!(matches!(err, Error::EigFailure { requested: 4, found: 2 }));
}

fn diag_state(d: Vec<f64>) -> PreconditionerState {
    let n = d.len();
    let solve: RegSolve = Arc::new(move |v: &Vector| Vector::from_fn(v.dim(), |i| v[i] / d[i]));
    PreconditionerState::init_identity_reg(n, solve)
}

fn v(x: &[f64]) -> Vector {
    Vector::new(x.to_vec()).unwrap()
}

#[test]
fn identity_and_diagonal_starts() {
    assert_eq!(diag_state(vec![1.0, 1.0]).apply(&v(&[3.0, 4.0])).unwrap(), v(&[3.0, 4.0]));
    assert_eq!(diag_state(vec![2.0, 4.0]).apply(&v(&[2.0, 4.0])).unwrap(), v(&[1.0, 1.0]));
}

#[test]
fn poisson_regularization_start_roundtrips_first_column() {
    use crate::models::{PoissonConfig, PoissonModel};
    use crate::problem::Problem;
    let problem = PoissonModel::new(PoissonConfig::with_mesh(8)).unwrap().into_problem();
    let reg = problem.regularization();
    let e = PreconditionerState::from_regularization(reg.clone());
    let e1 = Vector::basis(problem.dim(), 0);
    let back = e.apply(&reg.apply(&e1).unwrap()).unwrap();
    assert!(back.sub(&e1).norm() <= 1e-10);
}

#[test]
fn consistent_secant_pair_leaves_identity_unchanged() {
    let mut e = state(3, 1.0);
    let e1 = Vector::basis(3, 0);
    e.push_secant_pair(e1.clone(), e1.clone()).unwrap();
    for i in 0..3 {
        let b = Vector::basis(3, i);
        assert!(e.apply(&b).unwrap().sub(&b).norm() < 1e-15);
    }
}

#[test]
fn halving_secant_pair() {
    let mut e = state(3, 1.0);
    let e1 = Vector::basis(3, 0);
    e.push_secant_pair(e1.clone(), e1.scaled(2.0)).unwrap();
    assert!(e.apply(&e1).unwrap().sub(&e1.scaled(0.5)).norm() < 1e-15);
    assert!(e.apply(&e1.scaled(2.0)).unwrap().sub(&e1).norm() < 1e-15);
    let e2 = Vector::basis(3, 1);
    assert!(e.apply(&e2).unwrap().sub(&e2).norm() < 1e-15);
}

#[test]
fn fixed_point_block_pair_leaves_identity_unchanged() {
    let mut e = state(3, 1.0);
    let e1 = Vector::basis(3, 0);
    let out = e.block_update(&[e1.clone()], &[e1.clone()], 0.0, 5).unwrap();
    assert_eq!(out, UpdateOutcome::Applied { rank: 1 });
    for i in 0..3 {
        let b = Vector::basis(3, i);
        assert!(e.apply(&b).unwrap().sub(&b).norm() < 1e-15);
    }
}

#[test]
fn block_pair_from_two_by_two_operator() {
    let a = DenseMatrix::diag(&[2.0, 1.0]);
    let mut e = state(2, 1.0);
    let p = Vector::basis(2, 0);
    let w = a.apply(&p).unwrap();
    e.block_update(&[p], &[w], 0.0, 1).unwrap();
    let e1 = e.apply(&Vector::basis(2, 0)).unwrap();
    let e2 = e.apply(&Vector::basis(2, 1)).unwrap();
    assert!(e1.sub(&v(&[0.5, 0.0])).norm() < 1e-15);
    assert!(e2.sub(&v(&[0.0, 1.0])).norm() < 1e-15);
    // E A = diag(1, 1).
    for i in 0..2 {
        let b = Vector::basis(2, i);
        assert!(e.apply(&a.apply(&b).unwrap()).unwrap().sub(&b).norm() < 1e-15);
    }
}

#[test]
fn rotated_pairs_are_conjugate() {
    let n = 20;
    let h = spd_matrix(n, 41, 1e2);
    let mut e = state(n, 1.0);
    // Mixed columns so that P^T W is far from diagonal before rotation.
    let (p, w) = pcg_pairs(&h, &e, 5, 6);
    let p: Vec<Vector> = (0..p.len()).map(|i| p[i].add(&p[(i + 1) % p.len()].scaled(0.5))).collect();
    let w: Vec<Vector> = (0..w.len()).map(|i| w[i].add(&w[(i + 1) % w.len()].scaled(0.5))).collect();
    e.block_update(&p, &w, DEFAULT_TAU, n).unwrap();
    let Some(QnUpdate::Block { p, w, d }) = e.ledger().last() else {
        panic!("no block record");
    };
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if i != j {
                assert!(p[i].dot(&w[j]).abs() <= 1e-10 * dmax, "({i},{j})");
            }
        }
        let ew = e.apply(&w[i]).unwrap();
        assert!(ew.sub(&p[i]).norm() <= 1e-8 * p[i].norm());
    }
}

#[test]
fn rank_deficient_pairs_drop_null_directions() {
    let n = 20;
    let h = spd_matrix(n, 43, 1e2);
    let mut e = state(n, 1.0);
    let (p, w) = pcg_pairs(&h, &e, 6, 6);
    // An even cyclic sum of neighbours has a one-dimensional null space.
    let p: Vec<Vector> = (0..p.len()).map(|i| p[i].add(&p[(i + 1) % p.len()])).collect();
    let w: Vec<Vector> = (0..w.len()).map(|i| w[i].add(&w[(i + 1) % w.len()])).collect();
    let out = e.block_update(&p, &w, 0.0, n).unwrap();
    assert_eq!(out, UpdateOutcome::Applied { rank: 5 });
    let Some(QnUpdate::Block { p, w, .. }) = e.ledger().last() else {
        panic!("no block record");
    };
    for (pi, wi) in p.iter().zip(w) {
        assert!(e.apply(wi).unwrap().sub(pi).norm() <= 1e-8 * pi.norm());
    }
}

#[test]
fn lowrank_with_misfit_equal_to_regularization() {
    let n = 12;
    let c = 3.0;
    let lin = DenseMisfit {
        hm: DenseMatrix::from_fn(n, |i, j| if i == j { c } else { 0.0 }),
        c,
        g: Vector::zeros(n),
    };
    let (e, report) = init_lowrank_from(&lin, reg(n, c), 4, 2, LowRankOptions::default()).unwrap();
    for &l in &report.eigenvalues {
        assert!((l - 1.0).abs() < 1e-12);
    }
    for &g in e.base().gamma() {
        assert!((g - 0.5).abs() < 1e-12);
    }
    // V is R-orthonormal.
    let basis = e.base().basis();
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((c * a.dot(b) - want).abs() < 1e-12);
        }
    }
    let r = seeded_gaussian(n, 8);
    let mut want = r.scaled(1.0 / c);
    for x in basis {
        want.axpy(-0.5 * x.dot(&r), x);
    }
    assert!(e.apply(&r).unwrap().sub(&want).norm() < 1e-13);
}

#[test]
fn lowrank_on_poisson_inverts_captured_subspace() {
    use crate::continuation::minimize;
    use crate::models::{theta_paths_for_experiments, PoissonConfig, PoissonModel};
    use crate::problem::Problem;
    let problem = PoissonModel::new(PoissonConfig::with_mesh(12)).unwrap().into_problem();
    let (theta, _) = theta_paths_for_experiments(0.0);
    let m = minimize(&problem, &theta, &Vector::zeros(problem.dim()), 1e-8).unwrap();
    let lin = problem.linearize(&m, &theta).unwrap();
    let reg = problem.regularization();
    for seed in 0..4 {
        let (e, report) = init_lowrank(&problem, &m, &theta, 4, seed).unwrap();
        assert_eq!(report.eigenvalues.len(), 4);
        for x in e.base().basis() {
            let hx = lin.misfit_hess_apply(x).unwrap().add(&reg.apply(x).unwrap());
            let err = e.apply(&hx).unwrap().sub(x).norm() / x.norm();
            assert!(err <= 0.05, "seed {seed}: relative error {err}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn updates_keep_symmetry_and_definiteness(seed in 0u64..10_000, count in 1usize..6) {
        let n = 9;
        let h = spd_matrix(n, seed, 100.0);
        let mut e = state(n, 1.0);
        for k in 0..count {
            let z = seeded_gaussian(n, seed + 50 + k as u64);
            let y = h.apply(&z).unwrap();
            e.push_secant_pair(z.clone(), y.clone()).unwrap();
            let scale = operator_scale(&e, 4, seed).unwrap();
            prop_assert!(parametric_secant_residual(&e, &z, &y, scale).unwrap() <= 1e-10);
            prop_assert!(symmetry_defect(&e, 4, seed, scale).unwrap() <= 1e-12);
            prop_assert!(min_rayleigh_quotient(&e, 4, seed).unwrap() > 0.0);
        }
        let (p, w) = pcg_pairs(&h, &e, seed + 1, 6);
        if let UpdateOutcome::Applied { .. } = e.block_update(&p, &w, DEFAULT_TAU, 6).unwrap() {
            let audit = UpdateAudit::latest(&e, 4, seed).unwrap().unwrap();
            prop_assert!(!audit.parametric);
            prop_assert!(audit.secant_residual <= 1e-8);
            prop_assert!(audit.symmetry_defect <= 1e-12);
            prop_assert!(audit.min_rayleigh > 0.0);
        }
    }

    #[test]
    fn stored_vectors_grow_by_twice_rank(seed in 0u64..1000, r in 0usize..5) {
        let n = 8;
        let h = spd_matrix(n, seed, 20.0);
        let mut e = state(n, 1.0);
        let before = e.stored_vector_count();
        let (p, w) = pcg_pairs(&h, &e, seed, 6);
        let out = e.block_update(&p, &w, DEFAULT_TAU, r).unwrap();
        let rank = match out { UpdateOutcome::Applied { rank } => rank, _ => 0 };
        prop_assert!(rank <= r);
        prop_assert_eq!(e.stored_vector_count(), before + 2 * rank);
    }
}

