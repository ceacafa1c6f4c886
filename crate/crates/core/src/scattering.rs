//! Transmission, interior scattering wavefunction and its phase rigidity.
//!
//! Two independent routes give the transmission amplitude:
//!
//! * the resonant sum over eigenstates of `H_eff(E)`,
//!   `t = -2πi Σ_λ ⟨ξ_L|V|φ_λ)(φ_λ|V|ξ_R⟩ / (E - z_λ)`;
//! * a Fisher–Lee linear solve, `t = 2i v² sqrt(sin k sin k') χᵀ G χ'`,
//!   with `G = (E - H_eff)⁻¹` and no eigendecomposition.
//!
//! Amplitude phases follow the convention that the right-lead channel
//! function enters with a minus sign; under it both routes agree exactly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::band::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::heff::{assemble, channel_couplings, heff_band};
use crate::models::{Channel, ModelSpec, OpenSystem, Side};
use crate::spectral::{eig_complex_symmetric, rigidity_decomposition};
use crate::C64;

/// Smallest eigenvector rigidity `r = 1/A` accepted in the resonant sum.
/// Rounding errors there grow like `A²`, so below this the sum is no
/// longer an accurate route to `t`.
pub const MIN_SUM_RIGIDITY: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveRigidity {
    /// `ρ = Σ Ψ² / Σ |Ψ|²`.
    pub rho: C64,
    /// Rotation angle in `[0, π)` that orthogonalizes `Re Ψ̃` and `Im Ψ̃`.
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct ScatteringSolution {
    pub energy: f64,
    pub incoming_lead: Side,
    /// Lowest-channel transmission amplitude.
    pub t: C64,
    /// `t_matrix[(n, m)]`: incoming channel `m` to outgoing channel `n` of
    /// the opposite lead.
    pub t_matrix: DMatrix<C64>,
    /// Lowest-channel reflection amplitude, `-1 + 2i v² sin k G_cc`.
    pub r_amp: C64,
    pub r_matrix: DMatrix<C64>,
    /// `Ψ = G V|ξ⟩` for the lowest channel of the incoming lead.
    pub psi_interior: DVector<C64>,
    /// `None` when `Ψ` vanishes identically (decoupled system).
    pub rigidity: Option<WaveRigidity>,
}

impl ScatteringSolution {
    /// Root-sum-square of all transmission amplitudes.
    pub fn t_aggregate(&self) -> f64 {
        self.t_matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Σ_n |t_nm|² + Σ_n |r_nm|²` for incoming channel `m`.
    pub fn flux(&self, m: usize) -> f64 {
        let t: f64 = self.t_matrix.column(m).iter().map(|z| z.norm_sqr()).sum();
        let r: f64 = self.r_matrix.column(m).iter().map(|z| z.norm_sqr()).sum();
        t + r
    }
}

/// One term `φ_λ (φ_λ|V|ξ⟩ / (E - z_λ))` of the eigen-expansion of `Ψ`.
#[derive(Debug, Clone)]
pub struct ExpansionTerm {
    pub state: usize,
    pub z: C64,
    pub weight: C64,
    pub term: DVector<C64>,
}

fn other(side: Side) -> Side {
    match side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    }
}

/// `E - H_eff(E)` factorized.
fn resolvent(system: &OpenSystem, energy: f64) -> Result<BandLu> {
    let h = heff_band(system, energy)?;
    let n = h.dim();
    let (kl, ku) = h.bandwidths();
    let mut a = BandMatrix::zeros(n, kl, ku);
    for i in 0..n {
        for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
            let mut value = -h.get(i, j);
            if i == j {
                value += energy;
            }
            if value != C64::new(0.0, 0.0) {
                a.add(i, j, value);
            }
        }
    }
    a.factor().ok_or(Error::Singular { energy })
}

fn open_channels(system: &OpenSystem, energy: f64) -> Result<Vec<Channel>> {
    system.check_threshold(energy)?;
    let channels = system.channel_data(energy).channels;
    if channels.is_empty() {
        return Err(Error::NoChannel { energy });
    }
    Ok(channels)
}

fn coupling_sign(side: Side) -> f64 {
    match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    }
}

/// Direct (linear-solve) scattering solution for waves entering through
/// `lead`.
pub fn solve_scattering(system: &OpenSystem, energy: f64, lead: Side) -> Result<ScatteringSolution> {
    let channels = open_channels(system, energy)?;
    let nc = channels.len();
    let v = system.spec().coupling_v;
    let n = system.dim();
    let incoming = system.contacts(lead);
    let outgoing = system.contacts(other(lead));

    if v == 0.0 {
        return Ok(ScatteringSolution {
            energy,
            incoming_lead: lead,
            t: C64::new(0.0, 0.0),
            t_matrix: DMatrix::zeros(nc, nc),
            r_amp: C64::new(-1.0, 0.0),
            r_matrix: -DMatrix::identity(nc, nc),
            psi_interior: DVector::zeros(n),
            rigidity: None,
        });
    }

    let lu = resolvent(system, energy)?;
    let columns: Vec<DVector<C64>> = channels
        .iter()
        .map(|ch| {
            let mut rhs = DVector::zeros(n);
            for (&site, chi) in incoming.iter().zip(&ch.profile) {
                rhs[site] = C64::new(*chi, 0.0);
            }
            lu.solve(&rhs)
        })
        .collect();

    let project = |sites: &[usize], ch: &Channel, x: &DVector<C64>| -> C64 {
        sites.iter().zip(&ch.profile).map(|(&s, chi)| x[s] * *chi).sum()
    };
    let two_i_v2 = C64::new(0.0, 2.0 * v * v);
    let t_matrix = DMatrix::from_fn(nc, nc, |a, b| {
        let f = (channels[a].sin_k * channels[b].sin_k).sqrt();
        two_i_v2 * f * project(outgoing, &channels[a], &columns[b])
    });
    let r_matrix = DMatrix::from_fn(nc, nc, |a, b| {
        let f = (channels[a].sin_k * channels[b].sin_k).sqrt();
        let delta = if a == b { 1.0 } else { 0.0 };
        two_i_v2 * f * project(incoming, &channels[a], &columns[b]) - delta
    });

    let amplitude = coupling_sign(lead) * v * (channels[0].sin_k / PI).sqrt();
    let psi_interior = &columns[0] * C64::new(amplitude, 0.0);
    let rigidity = phase_rigidity_wave(psi_interior.as_slice())
        .ok()
        .map(|(rho, theta)| WaveRigidity { rho, theta });

    Ok(ScatteringSolution {
        energy,
        incoming_lead: lead,
        t: t_matrix[(0, 0)],
        t_matrix,
        r_amp: r_matrix[(0, 0)],
        r_matrix,
        psi_interior,
        rigidity,
    })
}

/// Left-to-right transmission amplitude of the lowest channel from the
/// linear solve.
pub fn transmission_direct(spec: &ModelSpec, energy: f64) -> Result<C64> {
    let system = OpenSystem::new(spec)?;
    Ok(solve_scattering(&system, energy, Side::Left)?.t)
}

/// Transmission matrix from the resonant sum over eigenstates of
/// `H_eff(E)`, indexed like [`ScatteringSolution::t_matrix`] for incidence
/// from the left.
pub fn transmission_spectral_matrix(system: &OpenSystem, energy: f64) -> Result<DMatrix<C64>> {
    let channels = open_channels(system, energy)?;
    let heff = assemble(system, energy)?;
    let eig = eig_complex_symmetric(&heff.matrix)?;
    let ill_conditioned = (0..eig.dim()).any(|k| {
        let phi = eig.right_vectors.column(k);
        1.0 / phi.norm_squared() < MIN_SUM_RIGIDITY
    });
    if !eig.is_complete() || ill_conditioned {
        return Err(Error::Defective {
            energy,
            detail: "resonant sum is ill-conditioned near a coalescence".into(),
        });
    }
    let left: Vec<&DVector<C64>> = heff.couplings_on(Side::Left).map(|c| &c.vector).collect();
    let right: Vec<&DVector<C64>> = heff.couplings_on(Side::Right).map(|c| &c.vector).collect();
    let nc = channels.len();
    let mut t = DMatrix::zeros(nc, nc);
    for (k, z) in eig.eigenvalues.iter().enumerate() {
        let phi = eig.right_vectors.column(k);
        let pole = C64::new(energy, 0.0) - z;
        let into: Vec<C64> = left.iter().map(|w| phi.dot(*w)).collect();
        let out: Vec<C64> = right.iter().map(|w| phi.dot(*w)).collect();
        for a in 0..nc {
            for b in 0..nc {
                t[(a, b)] += out[a] * into[b] / pole;
            }
        }
    }
    Ok(t * C64::new(0.0, -2.0 * PI))
}

pub fn transmission_spectral(spec: &ModelSpec, energy: f64) -> Result<C64> {
    let system = OpenSystem::new(spec)?;
    Ok(transmission_spectral_matrix(&system, energy)?[(0, 0)])
}

/// Interior wavefunction `Ψ = (E - H_eff)⁻¹ V|ξ_lead⟩` of the lowest channel.
pub fn scattering_wavefunction(spec: &ModelSpec, energy: f64, lead: Side) -> Result<DVector<C64>> {
    let system = OpenSystem::new(spec)?;
    Ok(solve_scattering(&system, energy, lead)?.psi_interior)
}

/// Terms of the eigen-expansion `Ψ = Σ_λ φ_λ (φ_λ|V|ξ⟩ / (E - z_λ))`,
/// largest first. Partial sums of these show which states dominate `Ψ`.
pub fn wavefunction_expansion(system: &OpenSystem, energy: f64, lead: Side) -> Result<Vec<ExpansionTerm>> {
    open_channels(system, energy)?;
    let heff = assemble(system, energy)?;
    let eig = eig_complex_symmetric(&heff.matrix)?;
    if !eig.is_complete() {
        return Err(Error::Defective {
            energy,
            detail: "expansion needs c-normalized eigenvectors".into(),
        });
    }
    let source = channel_couplings(system, energy)
        .into_iter()
        .find(|c| c.side == lead)
        .expect("open_channels guarantees a channel")
        .vector;
    let mut terms: Vec<ExpansionTerm> = (0..eig.dim())
        .map(|k| {
            let phi = eig.vector(k);
            let z = eig.eigenvalues[k];
            let weight = phi.dot(&source) / (C64::new(energy, 0.0) - z);
            ExpansionTerm {
                state: k,
                z,
                weight,
                term: phi * weight,
            }
        })
        .collect();
    terms.sort_by(|a, b| b.term.norm().total_cmp(&a.term.norm()).then(a.state.cmp(&b.state)));
    Ok(terms)
}

/// Sum of the first `count` expansion terms.
pub fn partial_sum(terms: &[ExpansionTerm], count: usize) -> DVector<C64> {
    let n = terms.first().map_or(0, |t| t.term.len());
    terms
        .iter()
        .take(count)
        .fold(DVector::zeros(n), |acc, t| acc + &t.term)
}

/// `ρ = Σ Ψ² / Σ |Ψ|²` and the angle `θ` with `ρ = e^{2iθ} |ρ|`.
pub fn phase_rigidity_wave(psi: &[C64]) -> Result<(C64, f64)> {
    let d = rigidity_decomposition(psi)?;
    Ok((d.ratio, d.theta))
}

/// Line profile of two fully overlapping resonances at `E_d` with width
/// `Γ_d`: `S = 1 - 2iΓ/(E - E_d + iΓ/2) - Γ²/(E - E_d + iΓ/2)²`.
pub fn double_pole_profile(energy: f64, e_d: f64, gamma_d: f64) -> C64 {
    debug_assert!(gamma_d > 0.0);
    let x = C64::new(energy - e_d, gamma_d / 2.0);
    C64::new(1.0, 0.0) - C64::new(0.0, 2.0 * gamma_d) / x - gamma_d * gamma_d / (x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heff::solve_poles;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn u0() -> f64 {
        2f64.sqrt() / 16.0
    }

    fn angle(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
        (a.dotc(b).norm() / (a.norm() * b.norm())).min(1.0).acos()
    }

    #[test]
    fn double_dot_band_center_is_perfect() {
        for (u, v) in [(u0(), 0.2), (u0(), 0.5), (0.3, 1.1)] {
            let spec = ModelSpec::double_dot(u, v);
            let direct = transmission_direct(&spec, 0.0).unwrap();
            assert!((direct - C64::new(-1.0, 0.0)).norm() < 1e-12, "{direct}");
            if (v - 0.5).abs() > 1e-3 {
                let spectral = transmission_spectral(&spec, 0.0).unwrap();
                assert!((spectral - C64::new(-1.0, 0.0)).norm() < 1e-10, "{spectral}");
            }
        }
    }

    #[test]
    fn single_site_closed_form() {
        // G = 1 / (E - 2 v² σ(E)), t = 2i v² sin k G
        let v = 0.6;
        let spec = ModelSpec::chain(1, v);
        for e in [-1.7, -0.4, 0.0, 0.9, 1.95] {
            let sigma = crate::models::surface_sigma(e);
            let sin_k = (1.0 - e * e / 4.0).sqrt();
            let g = (C64::new(e, 0.0) - sigma * (2.0 * v * v)).inv();
            let expect = C64::new(0.0, 2.0 * v * v * sin_k) * g;
            let got = transmission_direct(&spec, e).unwrap();
            assert!((got - expect).norm() < 1e-12, "{e}: {got} vs {expect}");
        }
    }

    #[test]
    fn decoupled_system_transmits_nothing() {
        for e in [-1.5, -1.0, 0.0, 0.445, 1.2] {
            assert_eq!(transmission_direct(&ModelSpec::chain(6, 0.0), e).unwrap(), C64::new(0.0, 0.0));
        }
        let psi = scattering_wavefunction(&ModelSpec::chain(6, 0.0), 0.3, Side::Left).unwrap();
        assert_eq!(psi.norm(), 0.0);
        let small = scattering_wavefunction(&ModelSpec::chain(6, 1e-4), 0.3, Side::Left).unwrap();
        assert!(small.norm() < 1e-3);
    }

    #[test]
    fn outside_band_has_no_channel() {
        let spec = ModelSpec::chain(6, 0.5);
        assert!(matches!(transmission_spectral(&spec, 2.3), Err(Error::NoChannel { .. })));
        assert!(matches!(transmission_direct(&spec, -2.3), Err(Error::NoChannel { .. })));
    }

    #[test]
    fn narrow_resonance_transmits_fully() {
        let spec = ModelSpec::chain(6, 0.5);
        let poles = solve_poles(&spec).unwrap();
        let narrow = poles
            .iter()
            .min_by(|a, b| a.width.total_cmp(&b.width))
            .unwrap();
        let t = transmission_spectral(&spec, narrow.energy).unwrap();
        assert!((t.norm() - 1.0).abs() < 0.05, "{}", t.norm());
    }

    #[test]
    fn double_dot_wavefunction_matches_resolvent_column() {
        let (u, v) = (u0(), 0.4);
        let psi = scattering_wavefunction(&ModelSpec::double_dot(u, v), 0.0, Side::Left).unwrap();
        let v2 = v * v;
        let expect = DVector::from_vec(vec![
            C64::new(0.0, -1.0 / (2.0 * v2)),
            C64::new(-1.0 / (2.0 * u), 0.0),
            C64::new(0.0, 1.0 / (2.0 * v2)),
        ]);
        let scale = psi.dot(&expect.conjugate()) / expect.norm_squared();
        assert!((psi - expect * scale).norm() < 1e-12 * scale.norm() * 100.0);
    }

    #[test]
    fn double_dot_rigidity_zero() {
        let v = 1.0 / (2.0 * 2f64.sqrt());
        let psi = scattering_wavefunction(&ModelSpec::double_dot(u0(), v), 0.0, Side::Left).unwrap();
        let (rho, _) = phase_rigidity_wave(psi.as_slice()).unwrap();
        assert!(rho.norm() < 1e-12, "{rho}");
    }

    #[test]
    fn narrow_pole_dominates_wavefunction() {
        let spec = ModelSpec::chain(6, 0.5);
        let system = OpenSystem::new(&spec).unwrap();
        let poles = solve_poles(&spec).unwrap();
        let narrow = poles.iter().min_by(|a, b| a.width.total_cmp(&b.width)).unwrap();
        let psi = solve_scattering(&system, narrow.energy, Side::Left).unwrap().psi_interior;
        let terms = wavefunction_expansion(&system, narrow.energy, Side::Left).unwrap();
        assert!(angle(&psi, &partial_sum(&terms, 1)) < 0.1);
        assert!(angle(&psi, &narrow.eigenvector) < 0.1);
        // the full expansion reproduces the solve
        assert!((partial_sum(&terms, terms.len()) - &psi).norm() < 1e-10 * psi.norm());
    }

    #[test]
    fn phase_rigidity_examples() {
        let (rho, theta) = phase_rigidity_wave(&[C64::new(1.0, 0.0), C64::new(-0.5, 0.0)]).unwrap();
        assert_abs_diff_eq!(rho.re, 1.0, epsilon = 1e-15);
        assert_eq!(theta, 0.0);
        let wave: Vec<C64> = (0..4).map(|r| C64::from_polar(1.0, PI * r as f64 / 2.0)).collect();
        let (rho, _) = phase_rigidity_wave(&wave).unwrap();
        assert!(rho.norm() < 1e-15);
        assert!(phase_rigidity_wave(&[C64::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn double_pole_profile_examples() {
        let s = double_pole_profile(0.3, 0.3, 0.7);
        assert!((s - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((double_pole_profile(1e7, 0.0, 1.0) - C64::new(1.0, 0.0)).norm() < 1e-6);
        for k in 0..1000 {
            let e = -5.0 + 10.0 * k as f64 / 999.0;
            // S = (x - iΓ)² / x² with x = E - E_d + iΓ/2
            let x = C64::new(e - 1.0, 0.1);
            let factored = (x - C64::new(0.0, 0.2)).powi(2) / (x * x);
            let s = double_pole_profile(e, 1.0, 0.2);
            assert!((s - factored).norm() < 1e-12);
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn billiard_channels_conserve_flux() {
        let spec = ModelSpec {
            nx: 8,
            ny: 10,
            ..ModelSpec::billiard(2, 1.0, 1.5)
        };
        let system = OpenSystem::new(&spec).unwrap();
        for e in [1.3, 2.2, 3.5] {
            let sol = solve_scattering(&system, e, Side::Left).unwrap();
            for m in 0..sol.t_matrix.ncols() {
                assert_abs_diff_eq!(sol.flux(m), 1.0, epsilon = 1e-10);
            }
            let spectral = transmission_spectral_matrix(&system, e).unwrap();
            assert!((spectral - &sol.t_matrix).norm() < 1e-8);
        }
    }

    #[test]
    fn reciprocity() {
        let spec = ModelSpec::chain(5, 0.7);
        let system = OpenSystem::new(&spec).unwrap();
        for e in [-1.1, 0.2, 1.6] {
            let lr = solve_scattering(&system, e, Side::Left).unwrap().t;
            let rl = solve_scattering(&system, e, Side::Right).unwrap().t;
            assert!((lr - rl).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rho_phase_covariance(re in proptest::collection::vec(-1.0f64..1.0, 6),
                                im in proptest::collection::vec(-1.0f64..1.0, 6),
                                alpha in -3.2f64..3.2) {
            let psi: Vec<C64> = re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect();
            prop_assume!(psi.iter().map(|x| x.norm_sqr()).sum::<f64>() > 1e-6);
            let turned: Vec<C64> = psi.iter().map(|x| x * C64::from_polar(1.0, alpha)).collect();
            let (a, _) = phase_rigidity_wave(&psi).unwrap();
            let (b, _) = phase_rigidity_wave(&turned).unwrap();
            prop_assert!((a.norm() - b.norm()).abs() < 1e-12);
            prop_assert!((a * C64::from_polar(1.0, 2.0 * alpha) - b).norm() < 1e-12);
            prop_assert!(a.norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn real_vector_times_phase_is_rigid(re in proptest::collection::vec(-1.0f64..1.0, 6),
                                            alpha in -3.2f64..3.2) {
            prop_assume!(re.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let psi: Vec<C64> = re.iter().map(|x| C64::from_polar(*x, alpha)).collect();
            let (rho, _) = phase_rigidity_wave(&psi).unwrap();
            prop_assert!((rho.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn chain_unitarity(e in -1.99f64..1.99, v in 0.05f64..1.5) {
            let system = OpenSystem::new(&ModelSpec::chain(6, v)).unwrap();
            let sol = solve_scattering(&system, e, Side::Left).unwrap();
            prop_assert!((sol.t.norm_sqr() + sol.r_amp.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }
}
