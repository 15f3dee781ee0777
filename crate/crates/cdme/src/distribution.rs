//! Number-resolved densities assembled from the reaction-diffusion field.
//!
//! With m(t) the mass of the field v, the probability of an empty system is
//! rho_0(t) = exp(-m(t)) and the n-particle densities factorize as
//! rho_n(t, x_1..x_n) = exp(-m) v(t, x_1) ... v(t, x_n) / n!. The particle
//! count is therefore Poisson(m(t)) and, given the count, positions are iid
//! with density v/m. Nothing here ever materializes an n-tensor: rho_n is an
//! evaluator over the shared [`PdeSolution`].

use std::sync::Arc;

use crate::error::{CdmeError, Result};
use crate::pde::PdeSolution;
use crate::rates::RateField;
use crate::special::{poisson_pmf, poisson_tail};

/// Default number of tabulated pmf entries.
pub const DEFAULT_COUNT_CAP: usize = 50;

/// Poisson count law at a fixed time, with explicit truncation bookkeeping.
#[derive(Debug, Clone)]
pub struct CountDistribution {
    pub time: f64,
    pub mean: f64,
    /// P(N = n) for n = 0..=n_max.
    pub pmf: Vec<f64>,
    /// P(N > n_max).
    pub tail: f64,
}

/// The factorized law of the particle system at all times.
#[derive(Debug, Clone)]
pub struct CdmeDistribution {
    solution: Arc<PdeSolution>,
}

impl CdmeDistribution {
    pub fn new(solution: Arc<PdeSolution>) -> Self {
        Self { solution }
    }

    pub fn solution(&self) -> &PdeSolution {
        &self.solution
    }

    /// Probability of an empty system: exp(-m(t)).
    pub fn rho0(&self, t: f64) -> f64 {
        (-self.solution.mass(t)).exp()
    }

    /// n-particle density at the given positions. The product is taken in
    /// sorted order, so the result is bitwise invariant under permutations
    /// of the arguments.
    pub fn rho_n(&self, t: f64, points: &[f64]) -> Result<f64> {
        for &x in points {
            if !(0.0..=1.0).contains(&x) {
                return Err(CdmeError::PositionOutOfDomain(x));
            }
        }
        Ok(self.rho_n_unchecked(t, points))
    }

    fn rho_n_unchecked(&self, t: f64, points: &[f64]) -> f64 {
        let mut values: Vec<f64> = points.iter().map(|&x| self.solution.value(t, x)).collect();
        values.sort_by(f64::total_cmp);
        let mut product = (-self.solution.mass(t)).exp();
        for (i, v) in values.iter().enumerate() {
            product *= v / (i + 1) as f64;
        }
        product
    }

    /// Tabulated Poisson count law P(N(t) = n) for n <= n_max.
    pub fn count_pmf(&self, t: f64, n_max: usize) -> CountDistribution {
        let mean = self.solution.mass(t);
        let pmf = (0..=n_max).map(|n| poisson_pmf(n, mean)).collect();
        CountDistribution {
            time: t,
            mean,
            pmf,
            tail: poisson_tail(n_max, mean),
        }
    }

    /// Conditional position density p(t, x) = v(t, x) / m(t).
    pub fn conditional_density(&self, t: f64, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(CdmeError::PositionOutOfDomain(x));
        }
        let mass = self.solution.mass(t);
        if mass <= 1e-14 {
            return Err(CdmeError::DegenerateTime(mass));
        }
        Ok(self.solution.value(t, x) / mass)
    }

    /// Defect of the infinite master-equation hierarchy at level `n`,
    /// evaluated through the density evaluators alone: time derivative and
    /// Laplacians by central differences, the death-gain integral by
    /// trapezoidal quadrature on the solution grid. Supports n <= 3 and
    /// requires a smooth (spectral) evaluator, t > 0 and positions away
    /// from the walls and from any Dirac atom of the creation field.
    pub fn residual(
        &self,
        lambda_c: &RateField,
        lambda_d: &RateField,
        n: usize,
        t: f64,
        points: &[f64],
    ) -> Result<f64> {
        if n > 3 {
            return Err(CdmeError::UnsupportedOrder(n));
        }
        assert_eq!(points.len(), n, "need exactly n positions");
        assert!(t > 0.0, "residual requires t > 0");
        for &x in points {
            if !(1e-6..=1.0 - 1e-6).contains(&x) && n > 0 {
                return Err(CdmeError::PositionOutOfDomain(x));
            }
        }

        let rho = |tt: f64, pts: &[f64]| self.rho_n_unchecked(tt, pts);

        let dt = (t / 2.0).min(1e-3);
        let drho_dt = (rho(t + dt, points) - rho(t - dt, points)) / (2.0 * dt);

        let mut laplacians = 0.0;
        let mut scratch = points.to_vec();
        for i in 0..n {
            let x = points[i];
            let dx = 1e-3f64.min(x / 2.0).min((1.0 - x) / 2.0);
            scratch[i] = x + dx;
            let plus = rho(t, &scratch);
            scratch[i] = x - dx;
            let minus = rho(t, &scratch);
            scratch[i] = x;
            let center = rho(t, &scratch);
            laplacians += (plus - 2.0 * center + minus) / (dx * dx);
        }

        let center = rho(t, points);

        // death gain: (n + 1) * integral of lambda_d(y) rho_{n+1}(..., y) dy
        let grid = self.solution.grid();
        let mut extended = points.to_vec();
        extended.push(0.0);
        let mut death_gain = 0.0;
        for i in 0..grid.len() {
            let y = grid.x(i);
            extended[n] = y;
            death_gain += grid.weight(i) * lambda_d.value_at(y) * rho(t, &extended);
        }
        death_gain *= (n + 1) as f64;

        let death_loss: f64 = points.iter().map(|&x| lambda_d.value_at(x)).sum::<f64>() * center;

        let birth_gain = if n == 0 {
            0.0
        } else {
            let mut acc = 0.0;
            for i in 0..n {
                let mut reduced = points.to_vec();
                reduced.remove(i);
                acc += lambda_c.value_at(points[i]) * rho(t, &reduced);
            }
            acc / n as f64
        };

        let birth_loss = lambda_c.integral() * center;

        Ok((drho_dt - (laplacians + death_gain - death_loss + birth_gain - birth_loss)).abs())
    }
}

/// Mean of the well-mixed rate equation: (c/d)(1 - exp(-d t)).
pub fn rate_equation_mean(c: f64, d: f64, t: f64) -> f64 {
    assert!(d > 0.0, "degradation rate must be positive");
    -c * f64::exp_m1(-d * t) / d
}

/// Closed-form birth-death master equation pmf for constant rates c, d:
/// Poisson with the rate-equation mean.
pub fn cme_reference(c: f64, d: f64, t: f64, n: usize) -> f64 {
    poisson_pmf(n, rate_equation_mean(c, d, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_cosine_basis, SpectralProjection};
    use crate::pde::solve_spectral;

    fn constant_distribution() -> CdmeDistribution {
        let basis = Arc::new(build_cosine_basis(0.5, 8, 201).unwrap());
        let lc = RateField::constant(0.5).unwrap();
        let ld = RateField::constant(0.5).unwrap();
        let proj = SpectralProjection::new(&lc, &ld, &basis).unwrap();
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        CdmeDistribution::new(Arc::new(solve_spectral(&proj, basis, &times)))
    }

    fn dirac_distribution(location: f64) -> CdmeDistribution {
        let basis = Arc::new(build_cosine_basis(0.5, 1000, 2001).unwrap());
        let lc = RateField::dirac(location, 0.5).unwrap();
        let ld = RateField::constant(0.5).unwrap();
        let proj = SpectralProjection::new(&lc, &ld, &basis).unwrap();
        let times = [0.0, 0.25, 1.0];
        CdmeDistribution::new(Arc::new(solve_spectral(&proj, basis, &times)))
    }

    /// RK4 on dv/dt = -d v + c; independent scalar oracle for the mass.
    fn rk4_rate_equation(c: f64, d: f64, t_end: f64, dt: f64) -> f64 {
        let f = |v: f64| -d * v + c;
        let mut v = 0.0;
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            let k1 = f(v);
            let k2 = f(v + 0.5 * dt * k1);
            let k3 = f(v + 0.5 * dt * k2);
            let k4 = f(v + dt * k3);
            v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        v
    }

    /// RK4 on the truncated birth-death master equation, n <= n_cap.
    fn rk4_cme(c: f64, d: f64, n_cap: usize, t_end: f64, dt: f64) -> Vec<f64> {
        let mut phi = vec![0.0; n_cap + 1];
        phi[0] = 1.0;
        let deriv = |phi: &[f64]| -> Vec<f64> {
            (0..=n_cap)
                .map(|n| {
                    let gain_death = if n < n_cap {
                        d * (n + 1) as f64 * phi[n + 1]
                    } else {
                        0.0
                    };
                    let gain_birth = if n > 0 { c * phi[n - 1] } else { 0.0 };
                    gain_death + gain_birth - (d * n as f64 + c) * phi[n]
                })
                .collect()
        };
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            let k1 = deriv(&phi);
            let s2: Vec<f64> = phi.iter().zip(&k1).map(|(p, k)| p + 0.5 * dt * k).collect();
            let k2 = deriv(&s2);
            let s3: Vec<f64> = phi.iter().zip(&k2).map(|(p, k)| p + 0.5 * dt * k).collect();
            let k3 = deriv(&s3);
            let s4: Vec<f64> = phi.iter().zip(&k3).map(|(p, k)| p + dt * k).collect();
            let k4 = deriv(&s4);
            for i in 0..=n_cap {
                phi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        phi
    }

    #[test]
    fn rho0_starts_at_one() {
        let dist = constant_distribution();
        assert_eq!(dist.rho0(0.0), 1.0);
    }

    /// Long-time limit of rho_0 for the constant case is exp(-1); the mass
    /// oracle is an independent RK4 integration of the rate equation.
    #[test]
    fn rho0_long_time_limit() {
        let dist = constant_distribution();
        let oracle_mass = rk4_rate_equation(0.5, 0.5, 40.0, 1e-3);
        assert!((dist.rho0(40.0) - (-oracle_mass).exp()).abs() < 1e-10);
        assert!((dist.rho0(40.0) - (-1.0f64).exp()).abs() < 1e-6);
    }

    /// Creation concentrated at the origin leaves rho_0 unchanged relative
    /// to uniform creation with the same total rate.
    #[test]
    fn rho0_dirac_curve_matches_constant_curve() {
        let dist = dirac_distribution(0.0);
        for &t in &[0.1, 0.25, 1.0, 3.0] {
            let expected = (f64::exp_m1(-0.5 * t)).exp(); // exp(-(1 - e^{-t/2}))
            assert!(
                (dist.rho0(t) - expected).abs() < 1e-12,
                "t={t}: {} vs {expected}",
                dist.rho0(t)
            );
        }
    }

    #[test]
    fn rho_n_constant_case_values() {
        let dist = constant_distribution();
        let m = -f64::exp_m1(-0.5);
        let rho1 = dist.rho_n(1.0, &[0.33]).unwrap();
        assert!((rho1 - (-m).exp() * m).abs() < 1e-12);
        let rho2 = dist.rho_n(1.0, &[0.1, 0.9]).unwrap();
        assert!((rho2 - (-m).exp() * m * m / 2.0).abs() < 1e-12);
        // value is independent of position
        assert_eq!(rho1, dist.rho_n(1.0, &[0.77]).unwrap());
    }

    #[test]
    fn rho_n_vanishes_at_time_zero() {
        let dist = constant_distribution();
        for n in 1..=4usize {
            let pts = vec![0.4; n];
            assert_eq!(dist.rho_n(0.0, &pts).unwrap(), 0.0);
        }
    }

    #[test]
    fn rho_n_rejects_outside_positions() {
        let dist = constant_distribution();
        assert!(matches!(
            dist.rho_n(1.0, &[1.2]),
            Err(CdmeError::PositionOutOfDomain(_))
        ));
    }

    /// The sorted product makes permutation symmetry exact in floating point.
    #[test]
    fn rho_n_is_bitwise_permutation_symmetric() {
        let dist = dirac_distribution(0.5);
        let base = [0.11, 0.42, 0.73];
        let reference = dist.rho_n(0.25, &base).unwrap();
        let perms = [
            [0.11, 0.73, 0.42],
            [0.42, 0.11, 0.73],
            [0.42, 0.73, 0.11],
            [0.73, 0.11, 0.42],
            [0.73, 0.42, 0.11],
        ];
        for p in perms {
            assert_eq!(dist.rho_n(0.25, &p).unwrap(), reference);
        }
    }

    #[test]
    fn count_pmf_degenerate_at_time_zero() {
        let dist = constant_distribution();
        let counts = dist.count_pmf(0.0, 10);
        assert_eq!(counts.pmf[0], 1.0);
        assert!(counts.pmf[1..].iter().all(|p| *p == 0.0));
        assert_eq!(counts.tail, 0.0);
    }

    /// Poisson consistency: integral of rho_1 equals P(N = 1), the double
    /// integral of rho_2 equals P(N = 2).
    #[test]
    fn count_pmf_matches_density_integrals() {
        let dist = constant_distribution();
        let grid = *dist.solution().grid();
        let t = 1.0;

        let rho1: Vec<f64> = grid
            .points()
            .map(|x| dist.rho_n(t, &[x]).unwrap())
            .collect();
        let int_rho1 = grid.trapezoid(&rho1);

        let mut int_rho2 = 0.0;
        for i in 0..grid.len() {
            let mut inner = 0.0;
            for j in 0..grid.len() {
                inner += grid.weight(j) * dist.rho_n(t, &[grid.x(i), grid.x(j)]).unwrap();
            }
            int_rho2 += grid.weight(i) * inner;
        }

        let counts = dist.count_pmf(t, 5);
        assert!((int_rho1 - counts.pmf[1]).abs() < 1e-7);
        assert!((int_rho2 - counts.pmf[2]).abs() < 1e-7);
    }

    /// With constant rates the spatial model collapses onto the well-mixed
    /// master equation: the count laws agree to 1e-10.
    #[test]
    fn count_pmf_reduces_to_cme() {
        let dist = constant_distribution();
        for &t in &[0.1, 0.5, 1.0, 2.0, 5.0] {
            let counts = dist.count_pmf(t, 30);
            for n in 0..=30 {
                let reference = cme_reference(0.5, 0.5, t, n);
                assert!(
                    (counts.pmf[n] - reference).abs() < 1e-10,
                    "t={t} n={n}: {} vs {reference}",
                    counts.pmf[n]
                );
            }
        }
    }

    #[test]
    fn conditional_density_uniform_for_constant_case() {
        let dist = constant_distribution();
        for &x in &[0.0, 0.31, 1.0] {
            assert!((dist.conditional_density(1.0, x).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_density_normalizes() {
        let dist = dirac_distribution(0.5);
        let grid = *dist.solution().grid();
        let p: Vec<f64> = grid
            .points()
            .map(|x| dist.conditional_density(0.25, x).unwrap())
            .collect();
        assert!((grid.trapezoid(&p) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn conditional_density_peaks_at_atom() {
        let dist = dirac_distribution(0.5);
        let grid = *dist.solution().grid();
        let (argmax, _) = grid
            .points()
            .enumerate()
            .map(|(i, x)| (i, dist.conditional_density(0.25, x).unwrap()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(grid.x(argmax), 0.5);
    }

    #[test]
    fn conditional_density_undefined_at_time_zero() {
        let dist = constant_distribution();
        assert!(matches!(
            dist.conditional_density(0.0, 0.5),
            Err(CdmeError::DegenerateTime(_))
        ));
    }

    #[test]
    fn cme_reference_initial_condition() {
        assert_eq!(cme_reference(0.5, 0.5, 0.0, 0), 1.0);
        assert_eq!(cme_reference(0.5, 0.5, 0.0, 3), 0.0);
    }

    /// Long-time CME limit phi_0 -> exp(-1), checked against an RK4
    /// integration of the truncated master equation with n_cap = 50.
    #[test]
    fn cme_reference_long_time_against_ode_oracle() {
        let phi = rk4_cme(0.5, 0.5, 50, 40.0, 1e-3);
        assert!((phi[0] - (-1.0f64).exp()).abs() < 1e-9);
        assert!((cme_reference(0.5, 0.5, 40.0, 0) - phi[0]).abs() < 1e-9);
        for (n, expected) in phi.iter().take(10).enumerate() {
            assert!(
                (cme_reference(0.5, 0.5, 40.0, n) - expected).abs() < 1e-9,
                "n = {n}"
            );
        }
    }

    /// The closed form satisfies the master-equation ODE under numeric
    /// differentiation.
    #[test]
    fn cme_reference_satisfies_its_ode() {
        let (c, d) = (0.5, 0.5);
        let delta = 1e-4;
        for &t in &[0.1, 0.5, 1.0, 2.0] {
            for n in 0..=10usize {
                let dphi = (cme_reference(c, d, t + delta, n) - cme_reference(c, d, t - delta, n))
                    / (2.0 * delta);
                let gain_death = d * (n + 1) as f64 * cme_reference(c, d, t, n + 1);
                let gain_birth = if n > 0 {
                    c * cme_reference(c, d, t, n - 1)
                } else {
                    0.0
                };
                let rhs = gain_death + gain_birth - (d * n as f64 + c) * cme_reference(c, d, t, n);
                assert!(
                    (dphi - rhs).abs() <= 1e-6,
                    "t={t} n={n}: residual {}",
                    (dphi - rhs).abs()
                );
            }
        }
    }

    #[test]
    fn residual_constant_case_all_levels() {
        let dist = constant_distribution();
        let lc = RateField::constant(0.5).unwrap();
        let ld = RateField::constant(0.5).unwrap();
        let r0 = dist.residual(&lc, &ld, 0, 0.5, &[]).unwrap();
        assert!(r0 <= 1e-6, "n=0 residual {r0}");
        let r1 = dist.residual(&lc, &ld, 1, 0.5, &[0.25]).unwrap();
        assert!(r1 <= 1e-5, "n=1 residual {r1}");
        let r2 = dist.residual(&lc, &ld, 2, 0.5, &[0.2, 0.7]).unwrap();
        assert!(r2 <= 1e-5, "n=2 residual {r2}");
        let r3 = dist.residual(&lc, &ld, 3, 0.5, &[0.2, 0.5, 0.8]).unwrap();
        assert!(r3 <= 1e-5, "n=3 residual {r3}");
    }

    #[test]
    fn residual_rejects_high_orders() {
        let dist = constant_distribution();
        let lc = RateField::constant(0.5).unwrap();
        let ld = RateField::constant(0.5).unwrap();
        assert!(matches!(
            dist.residual(&lc, &ld, 4, 0.5, &[0.1, 0.2, 0.3, 0.4]),
            Err(CdmeError::UnsupportedOrder(4))
        ));
    }
}
