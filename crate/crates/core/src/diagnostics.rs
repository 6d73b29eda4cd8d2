//! Analysis tools: the consistent-direction Z-test comparing projected
//! spin gradients against a reference gradient, Jaccard similarity of
//! low-energy solver samples, and spectral gaps of the annealing
//! Hamiltonian that interpolates between a transverse field and a QUBO.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::qubo::{energy, jaccard, QuboProblem, SpinVector};

/// Reference-gradient coordinates smaller than this in magnitude carry
/// no usable sign and are excluded from the agreement tally.
pub const CDP_EXCLUDE_TOL: f64 = 1e-12;

/// Largest spin count for which the dense 2^n x 2^n Hamiltonian is
/// built and diagonalized.
pub const ANNEAL_CAP: usize = 10;

/// Outcome of the consistent-direction test: out of `n` compared
/// coordinates, the projected sign agreed with the reference sign `k`
/// times, giving the binomial statistic `z` under the null hypothesis
/// of 0.5 agreement probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdpTally {
    pub k: usize,
    pub n: usize,
    pub z: f64,
}

impl CdpTally {
    /// Builds the tally from raw counts: z = (k - n/2) / sqrt(n/4).
    pub fn from_counts(k: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyTally);
        }
        if k > n {
            return Err(Error::InvalidArgument(format!(
                "agreement count {k} exceeds comparison count {n}"
            )));
        }
        let nf = n as f64;
        let z = (k as f64 - nf / 2.0) / (nf / 4.0).sqrt();
        Ok(CdpTally { k, n, z })
    }
}

/// Counts sign agreements between a projected spin vector and a
/// reference gradient, skipping coordinates whose reference magnitude
/// is below [`CDP_EXCLUDE_TOL`]. Returns `(agreements, compared)`,
/// both zero when every coordinate is excluded, so counts from many
/// projections can be pooled before forming a tally.
pub fn cdp_counts(projected: &SpinVector, reference: &DVector<f64>) -> Result<(usize, usize)> {
    if projected.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            context: "cdp_counts",
            expected: reference.len(),
            actual: projected.len(),
        });
    }
    let mut k = 0;
    let mut n = 0;
    for (i, &p) in projected.spins().iter().enumerate() {
        let g = reference[i];
        if g.abs() < CDP_EXCLUDE_TOL {
            continue;
        }
        n += 1;
        if (g > 0.0) == (p == 1) {
            k += 1;
        }
    }
    Ok((k, n))
}

/// Z-tests whether a projected spin gradient agrees in sign with a
/// reference gradient more often than chance.
pub fn cdp_test(projected: &SpinVector, reference: &DVector<f64>) -> Result<CdpTally> {
    let (k, n) = cdp_counts(projected, reference)?;
    CdpTally::from_counts(k, n)
}

/// Stacks per-column projection problems of one layer into a single
/// problem over the concatenated spins. The blocks do not interact, so
/// the joint ground state is the concatenation of the per-column ground
/// states; joining problems is how the annealing spectrum is studied as
/// a function of layer width.
pub fn joint_layer_qubo(columns: &[QuboProblem]) -> Result<QuboProblem> {
    if columns.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot join an empty list of column problems".into(),
        ));
    }
    let total: usize = columns.iter().map(|p| p.n).sum();
    let mut q = DMatrix::zeros(total, total);
    let mut s = DVector::zeros(total);
    let mut offset = 0.0;
    let mut base = 0;
    for p in columns {
        q.view_mut((base, base), (p.n, p.n)).copy_from(&p.q);
        s.rows_mut(base, p.n).copy_from(&p.s);
        offset += p.offset;
        base += p.n;
    }
    QuboProblem::new(q, s, offset)
}

/// Interpolating Hamiltonian H(s) = (1-s) H_B + s H_P in the
/// computational basis, a dense symmetric 2^n x 2^n matrix.
///
/// H_B = -sum_i sigma_x^(i) is the transverse field: entry (k, k') is
/// -1 exactly when the basis states differ in one spin. H_P is diagonal
/// with entry k equal to `energy` of the problem at the spin vector
/// `SpinVector::from_index(k, n)`, so at s = 1 the diagonal reproduces
/// the full QUBO spectrum, offset included.
pub fn build_anneal_hamiltonian(p: &QuboProblem, s: f64) -> Result<DMatrix<f64>> {
    if p.n > ANNEAL_CAP {
        return Err(Error::Capacity {
            n: p.n,
            cap: ANNEAL_CAP,
        });
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "annealing parameter s = {s} is outside [0, 1]"
        )));
    }
    let dim = 1usize << p.n;
    let mut h = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let g = SpinVector::from_index(k as u64, p.n);
        h[(k, k)] = s * energy(p, &g)?;
        for b in 0..p.n {
            h[(k, k ^ (1 << b))] = -(1.0 - s);
        }
    }
    Ok(h)
}

/// Eigenvalue levels of the annealing Hamiltonian over a uniform grid
/// of the schedule parameter, with the smallest first-excitation gap.
#[derive(Clone, Debug)]
pub struct AnnealSpectrum {
    /// Schedule values s in [0, 1], ascending.
    pub grid: Vec<f64>,
    /// Eigenvalues at each grid point, sorted ascending.
    pub levels: Vec<Vec<f64>>,
    /// Minimum of E_1 - E_0 over the grid.
    pub min_gap: f64,
    /// Grid point attaining the minimum gap.
    pub argmin_s: f64,
}

/// Diagonalizes H(s) on a uniform grid of at least three points and
/// records all eigenvalue levels and the minimum gap between the two
/// lowest.
pub fn spectral_gap(p: &QuboProblem, grid_points: usize) -> Result<AnnealSpectrum> {
    if grid_points < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 grid points, got {grid_points}"
        )));
    }
    if p.n == 0 {
        return Err(Error::InvalidArgument(
            "cannot compute a spectral gap for a problem with zero spins".into(),
        ));
    }
    let mut grid = Vec::with_capacity(grid_points);
    let mut levels = Vec::with_capacity(grid_points);
    let mut min_gap = f64::INFINITY;
    let mut argmin_s = 0.0;
    for j in 0..grid_points {
        let s = j as f64 / (grid_points - 1) as f64;
        let h = build_anneal_hamiltonian(p, s)?;
        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 100_000)
            .ok_or_else(|| Error::Numeric(format!("eigendecomposition failed at s = {s}")))?;
        let mut evs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        evs.sort_by(|a, b| a.partial_cmp(b).expect("symmetric eigenvalues are real"));
        let gap = evs[1] - evs[0];
        if gap < min_gap {
            min_gap = gap;
            argmin_s = s;
        }
        grid.push(s);
        levels.push(evs);
    }
    Ok(AnnealSpectrum {
        grid,
        levels,
        min_gap,
        argmin_s,
    })
}

/// Pairwise Jaccard similarity of the `top_k` lowest-energy samples.
/// Callers pass samples already sorted by energy ascending, as the
/// solvers return them.
pub fn sample_similarity(samples: &[SpinVector], top_k: usize) -> Result<DMatrix<f64>> {
    if top_k > samples.len() {
        return Err(Error::InvalidArgument(format!(
            "top_k = {top_k} exceeds the {} available samples",
            samples.len()
        )));
    }
    let mut m = DMatrix::zeros(top_k, top_k);
    for i in 0..top_k {
        for j in i..top_k {
            let v = jaccard(&samples[i], &samples[j])?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::solve_exhaustive;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, rng: &mut ChaCha8Rng) -> QuboProblem {
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-2.0..2.0);
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let s = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let offset = rng.gen_range(-1.0..1.0);
        QuboProblem::new(q, s, offset).unwrap()
    }

    #[test]
    fn z_statistic_matches_hand_formula() {
        for &(k, n) in &[(3usize, 10usize), (10, 10), (0, 7), (1234, 4000)] {
            let tally = CdpTally::from_counts(k, n).unwrap();
            let by_hand = (k as f64 - 0.5 * n as f64) / (0.25 * n as f64).sqrt();
            assert!((tally.z - by_hand).abs() <= 1e-12);
            assert_eq!((tally.k, tally.n), (k, n));
        }
    }

    #[test]
    fn tabulated_counts_give_expected_z() {
        assert!((CdpTally::from_counts(2285, 3915).unwrap().z - 10.4).abs() <= 0.1);
        assert!((CdpTally::from_counts(2199, 3647).unwrap().z - 12.4).abs() <= 0.1);
    }

    #[test]
    fn balanced_tally_scores_zero() {
        assert_eq!(CdpTally::from_counts(50, 100).unwrap().z, 0.0);
    }

    #[test]
    fn from_counts_rejects_empty_and_overfull_tallies() {
        assert!(matches!(CdpTally::from_counts(0, 0), Err(Error::EmptyTally)));
        assert!(matches!(
            CdpTally::from_counts(5, 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn cdp_counts_skip_tiny_reference_coordinates() {
        let projected = SpinVector::new(vec![1, -1, 1, -1]).unwrap();
        let reference = DVector::from_vec(vec![0.5, -2.0, 1e-13, -0.1]);
        let (k, n) = cdp_counts(&projected, &reference).unwrap();
        assert_eq!((k, n), (3, 3));
        let tally = cdp_test(&projected, &reference).unwrap();
        assert_eq!((tally.k, tally.n), (3, 3));
        assert_relative_eq!(tally.z, 3.0 / 3.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn cdp_counts_score_disagreements() {
        let projected = SpinVector::new(vec![-1, 1]).unwrap();
        let reference = DVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(cdp_counts(&projected, &reference).unwrap(), (0, 2));
    }

    #[test]
    fn cdp_test_errors_when_everything_is_excluded() {
        let projected = SpinVector::new(vec![1, -1]).unwrap();
        let reference = DVector::from_vec(vec![0.0, 1e-14]);
        assert!(matches!(
            cdp_test(&projected, &reference),
            Err(Error::EmptyTally)
        ));
    }

    #[test]
    fn cdp_counts_reject_length_mismatch() {
        let projected = SpinVector::new(vec![1]).unwrap();
        let reference = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            cdp_counts(&projected, &reference),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_spin_transverse_field_is_pauli_x() {
        let p = QuboProblem::new(DMatrix::zeros(1, 1), DVector::zeros(1), 0.0).unwrap();
        let h = build_anneal_hamiltonian(&p, 0.0).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
    }

    #[test]
    fn final_hamiltonian_diagonal_is_the_energy_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_problem(4, &mut rng);
        let h = build_anneal_hamiltonian(&p, 1.0).unwrap();
        for k in 0..16u64 {
            let g = SpinVector::from_index(k, 4);
            assert_eq!(h[(k as usize, k as usize)], energy(&p, &g).unwrap());
            for k2 in 0..16 {
                if k2 != k as usize {
                    assert_eq!(h[(k as usize, k2)], 0.0);
                }
            }
        }
    }

    #[test]
    fn hamiltonian_is_symmetric_on_a_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_problem(3, &mut rng);
        for j in 0..5 {
            let s = j as f64 / 4.0;
            let h = build_anneal_hamiltonian(&p, s).unwrap();
            assert_eq!(h, h.transpose());
        }
    }

    #[test]
    fn diagonal_minus_quadratic_form_is_the_constant_offset() {
        let q = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 2.0]);
        let s_vec = DVector::from_vec(vec![0.3, -0.7]);
        let p = QuboProblem::new(q, s_vec, 4.25).unwrap();
        let h = build_anneal_hamiltonian(&p, 1.0).unwrap();
        for k in 0..4u64 {
            let g = SpinVector::from_index(k, 2).to_f64();
            let quadratic = (g.transpose() * &p.q * &g)[(0, 0)] + p.s.dot(&g);
            assert_relative_eq!(h[(k as usize, k as usize)] - quadratic, 4.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn ising_expansion_reproduces_the_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = random_problem(4, &mut rng);
            let trace: f64 = (0..4).map(|i| p.q[(i, i)]).sum();
            for k in 0..16u64 {
                let g = SpinVector::from_index(k, 4);
                let gf = g.to_f64();
                let mut pairs = 0.0;
                for i in 0..4 {
                    for j in (i + 1)..4 {
                        pairs += 2.0 * p.q[(i, j)] * gf[i] * gf[j];
                    }
                }
                let expanded = pairs + p.s.dot(&gf) + trace + p.offset;
                assert_relative_eq!(expanded, energy(&p, &g).unwrap(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonian_rejects_large_problems_and_bad_schedule_values() {
        let small = QuboProblem::new(DMatrix::zeros(1, 1), DVector::zeros(1), 0.0).unwrap();
        assert!(matches!(
            build_anneal_hamiltonian(&small, 1.5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            build_anneal_hamiltonian(&small, -0.1),
            Err(Error::InvalidArgument(_))
        ));
        let big = QuboProblem::new(DMatrix::zeros(11, 11), DVector::zeros(11), 0.0).unwrap();
        assert!(matches!(
            build_anneal_hamiltonian(&big, 0.5),
            Err(Error::Capacity { n: 11, cap: 10 })
        ));
    }

    #[test]
    fn single_zero_spin_gap_closes_linearly() {
        let p = QuboProblem::new(DMatrix::zeros(1, 1), DVector::zeros(1), 0.0).unwrap();
        let spectrum = spectral_gap(&p, 5).unwrap();
        assert_eq!(spectrum.grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        // At s the 2x2 matrix is -(1-s) off-diagonal with zero diagonal,
        // so the eigenvalues are -(1-s) and (1-s) and the gap is 2(1-s).
        for (s, levels) in spectrum.grid.iter().zip(&spectrum.levels) {
            assert_relative_eq!(levels[1] - levels[0], 2.0 * (1.0 - s), epsilon = 1e-12);
        }
        assert_relative_eq!(spectrum.min_gap, 0.0, epsilon = 1e-12);
        assert_eq!(spectrum.argmin_s, 1.0);
    }

    /// Cyclic Jacobi rotations, an eigenvalue routine independent of the
    /// library solver.
    fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut a = m.clone();
        let scale = a.amax().max(1.0);
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off.sqrt() <= 1e-13 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)] == 0.0 {
                        continue;
                    }
                    let phi = 0.5 * (2.0 * a[(p, q)]).atan2(a[(p, p)] - a[(q, q)]);
                    let (sin, cos) = phi.sin_cos();
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = cos * akp + sin * akq;
                        a[(k, q)] = -sin * akp + cos * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = cos * apk + sin * aqk;
                        a[(q, k)] = -sin * apk + cos * aqk;
                    }
                }
            }
        }
        let mut evs: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        evs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        evs
    }

    #[test]
    fn eigenvalues_match_a_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let p = random_problem(3, &mut rng);
            let spectrum = spectral_gap(&p, 7).unwrap();
            for (s, levels) in spectrum.grid.iter().zip(&spectrum.levels) {
                let h = build_anneal_hamiltonian(&p, *s).unwrap();
                let oracle = jacobi_eigenvalues(&h);
                for (a, b) in levels.iter().zip(&oracle) {
                    assert!((a - b).abs() <= 1e-8, "s = {s}: {a} vs oracle {b}");
                }
            }
        }
    }

    #[test]
    fn gap_is_invariant_under_constant_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_problem(3, &mut rng);
        let shifted = QuboProblem::new(p.q.clone(), p.s.clone(), p.offset + 17.0).unwrap();
        let a = spectral_gap(&p, 9).unwrap();
        let b = spectral_gap(&shifted, 9).unwrap();
        assert_relative_eq!(a.min_gap, b.min_gap, epsilon = 1e-9);
        assert_eq!(a.argmin_s, b.argmin_s);
    }

    fn max_adjacent_level_change(spectrum: &AnnealSpectrum) -> f64 {
        let mut worst = 0.0f64;
        for pair in spectrum.levels.windows(2) {
            for (a, b) in pair[0].iter().zip(&pair[1]) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    #[test]
    fn levels_vary_continuously_under_grid_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_problem(3, &mut rng);
        let coarse = max_adjacent_level_change(&spectral_gap(&p, 5).unwrap());
        let medium = max_adjacent_level_change(&spectral_gap(&p, 9).unwrap());
        let fine = max_adjacent_level_change(&spectral_gap(&p, 17).unwrap());
        assert!(medium < coarse, "{medium} >= {coarse}");
        assert!(fine < medium, "{fine} >= {medium}");
    }

    #[test]
    fn spectral_gap_validates_inputs() {
        let p = QuboProblem::new(DMatrix::zeros(1, 1), DVector::zeros(1), 0.0).unwrap();
        assert!(matches!(
            spectral_gap(&p, 2),
            Err(Error::InvalidArgument(_))
        ));
        let empty = QuboProblem::new(DMatrix::zeros(0, 0), DVector::zeros(0), 0.0).unwrap();
        assert!(matches!(
            spectral_gap(&empty, 5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn similarity_of_identical_samples_is_all_ones() {
        let g = SpinVector::new(vec![1, -1, 1]).unwrap();
        let m = sample_similarity(&[g.clone(), g.clone(), g], 3).unwrap();
        assert_eq!(m, DMatrix::from_element(3, 3, 1.0));
    }

    #[test]
    fn similarity_matrix_is_symmetric_with_unit_diagonal() {
        let samples = vec![
            SpinVector::new(vec![1, 1, -1, -1]).unwrap(),
            SpinVector::new(vec![1, -1, 1, -1]).unwrap(),
            SpinVector::new(vec![-1, 1, 1, 1]).unwrap(),
        ];
        let m = sample_similarity(&samples, 3).unwrap();
        assert_eq!(m, m.transpose());
        for i in 0..3 {
            assert_eq!(m[(i, i)], 1.0);
        }
    }

    #[test]
    fn disjoint_supports_score_zero() {
        let samples = vec![
            SpinVector::new(vec![1, -1, -1]).unwrap(),
            SpinVector::new(vec![-1, 1, 1]).unwrap(),
        ];
        let m = sample_similarity(&samples, 2).unwrap();
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn similarity_rejects_oversized_top_k() {
        let samples = vec![SpinVector::new(vec![1]).unwrap()];
        assert!(matches!(
            sample_similarity(&samples, 2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn joint_energy_is_the_sum_of_block_energies() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p1 = random_problem(2, &mut rng);
        let p2 = random_problem(3, &mut rng);
        let joint = joint_layer_qubo(&[p1.clone(), p2.clone()]).unwrap();
        assert_eq!(joint.n, 5);
        for k1 in 0..4u64 {
            for k2 in 0..8u64 {
                let g1 = SpinVector::from_index(k1, 2);
                let g2 = SpinVector::from_index(k2, 3);
                let mut spins = g1.spins().to_vec();
                spins.extend_from_slice(g2.spins());
                let g = SpinVector::new(spins).unwrap();
                assert_relative_eq!(
                    energy(&joint, &g).unwrap(),
                    energy(&p1, &g1).unwrap() + energy(&p2, &g2).unwrap(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn joint_ground_state_concatenates_block_ground_states() {
        let p1 = QuboProblem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![-4.0, 0.0]),
            4.0,
        )
        .unwrap();
        let p2 = QuboProblem::new(DMatrix::zeros(1, 1), DVector::from_vec(vec![2.0]), 0.0).unwrap();
        let joint = joint_layer_qubo(&[p1.clone(), p2.clone()]).unwrap();
        let b1 = solve_exhaustive(&p1).unwrap().best;
        let b2 = solve_exhaustive(&p2).unwrap().best;
        let mut spins = b1.spins().to_vec();
        spins.extend_from_slice(b2.spins());
        assert_eq!(
            solve_exhaustive(&joint).unwrap().best,
            SpinVector::new(spins).unwrap()
        );
    }

    #[test]
    fn joining_zero_columns_is_an_error() {
        assert!(matches!(
            joint_layer_qubo(&[]),
            Err(Error::InvalidArgument(_))
        ));
    }
}
