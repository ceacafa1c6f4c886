//! The effective Hamiltonian `H_eff(E) = H_B + Σ_C V_BC (E⁺ - H_C)⁻¹ V_CB`,
//! its resonance poles, the phase rigidity of its eigenvectors and the
//! location of branch points.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::band::BandMatrix;
use crate::error::{Error, Result};
use crate::models::{Channel, ModelSpec, OpenSystem, Side, THRESHOLD_NUDGE};
use crate::simplex::{self, SimplexOptions};
use crate::spectral::{
    self, eig_complex_symmetric, rigidity_decomposition, track_pairing, EigenSystem,
    RigidityDecomposition,
};
use crate::C64;

/// Fixed-point tolerance on `|E - Re z(E)|`.
pub const POLE_TOL: f64 = 1e-10;
pub const POLE_MAX_ITER: usize = 200;

/// Interior restriction `V|ξ_C⟩` of one lead channel.
#[derive(Debug, Clone)]
pub struct ChannelCoupling {
    pub side: Side,
    pub channel: Channel,
    /// Component `± v sqrt(sin k / π) χ(j)` on each contact site, zero
    /// elsewhere; the right lead carries the minus sign.
    pub vector: DVector<C64>,
}

#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub energy: f64,
    pub matrix: DMatrix<C64>,
    /// Couplings of every propagating channel, left lead first.
    pub couplings: Vec<ChannelCoupling>,
}

impl EffectiveHamiltonian {
    pub fn couplings_on(&self, side: Side) -> impl Iterator<Item = &ChannelCoupling> {
        self.couplings.iter().filter(move |c| c.side == side)
    }
}

#[derive(Debug, Clone)]
pub struct ResonanceState {
    /// Fixed point `E_λ = Re z_λ(E_λ)`.
    pub energy: f64,
    /// `Γ_λ = -2 Im z_λ(E_λ)`.
    pub width: f64,
    pub z: C64,
    pub eigenvector: DVector<C64>,
    /// `A_λ = ⟨φ|φ⟩`; `None` when the vector could not be c-normalized.
    pub a_norm: Option<f64>,
    pub rigidity: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct StateRigidity {
    /// `r = |φᵀφ| / φ†φ`, in `[0, 1]`.
    pub r: f64,
    pub decomposition: RigidityDecomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub v_c: f64,
    pub e_c: f64,
    /// `|z_λ - z_λ'|` of the coalescing pair at `(v_c, E_c)`.
    pub gap: f64,
    /// `min_± ‖φ_λ ∓ i φ_λ'‖ / ‖φ_λ‖` for the c-normalized pair.
    pub chirality_error: f64,
    /// `r` of both coalescing states.
    pub rigidities: (f64, f64),
    /// Mean eigenvalue of the pair.
    pub z_c: C64,
}

#[derive(Debug, Clone, Copy)]
pub struct BranchSearch {
    pub v_range: (f64, f64),
    pub e_range: (f64, f64),
    /// Points per axis of the preliminary scan.
    pub grid: usize,
    /// Largest gap still accepted as a coalescence.
    pub accept_gap: f64,
}

impl BranchSearch {
    pub fn new(v_range: (f64, f64), e_range: (f64, f64)) -> Self {
        Self {
            v_range,
            e_range,
            grid: 41,
            accept_gap: 1e-4,
        }
    }
}

fn channel_coupling(system: &OpenSystem, side: Side, channel: &Channel) -> ChannelCoupling {
    let v = system.spec().coupling_v;
    let sign = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    let amplitude = sign * v * (channel.sin_k / PI).sqrt();
    let mut vector = DVector::zeros(system.dim());
    for (&site, chi) in system.contacts(side).iter().zip(&channel.profile) {
        vector[site] = C64::new(amplitude * chi, 0.0);
    }
    ChannelCoupling {
        side,
        channel: channel.clone(),
        vector,
    }
}

/// `H_eff(E)` in band storage, the form used by linear solves.
pub fn heff_band(system: &OpenSystem, energy: f64) -> Result<BandMatrix> {
    let b = system.bandwidth();
    let mut band = BandMatrix::zeros(system.dim(), b, b);
    for &(i, j, value) in system.closed_entries() {
        band.add(i, j, C64::new(value, 0.0));
        if i != j {
            band.add(j, i, C64::new(value, 0.0));
        }
    }
    for lead in system.self_energy(energy)? {
        for (a, &i) in lead.sites.iter().enumerate() {
            for (b, &j) in lead.sites.iter().enumerate() {
                band.add(i, j, lead.block[(a, b)]);
            }
        }
    }
    Ok(band)
}

/// Couplings of the propagating channels of both leads at `energy`.
pub fn channel_couplings(system: &OpenSystem, energy: f64) -> Vec<ChannelCoupling> {
    let data = system.channel_data(energy);
    [Side::Left, Side::Right]
        .iter()
        .flat_map(|&side| data.channels.iter().map(move |ch| (side, ch)))
        .map(|(side, ch)| channel_coupling(system, side, ch))
        .collect()
}

pub fn assemble(system: &OpenSystem, energy: f64) -> Result<EffectiveHamiltonian> {
    let matrix = heff_band(system, energy)?.to_dense();
    Ok(EffectiveHamiltonian {
        energy,
        matrix,
        couplings: channel_couplings(system, energy),
    })
}

pub fn build_heff(spec: &ModelSpec, energy: f64) -> Result<EffectiveHamiltonian> {
    assemble(&OpenSystem::new(spec)?, energy)
}

/// Moves an energy sitting on a lead threshold just above it.
fn off_threshold(system: &OpenSystem, energy: f64) -> f64 {
    if system.check_threshold(energy).is_err() {
        energy + THRESHOLD_NUDGE
    } else {
        energy
    }
}

pub fn phase_rigidity_state(phi: &[C64]) -> Result<StateRigidity> {
    let decomposition = rigidity_decomposition(phi)?;
    Ok(StateRigidity {
        r: decomposition.ratio.norm(),
        decomposition,
    })
}

fn rigidity_of(sys: &EigenSystem, index: usize) -> f64 {
    let v: Vec<C64> = sys.right_vectors.column(index).iter().copied().collect();
    phase_rigidity_state(&v).map(|s| s.r).unwrap_or(0.0)
}

fn eig_at(system: &OpenSystem, energy: f64) -> Result<EigenSystem> {
    eig_complex_symmetric(&heff_band(system, energy)?.to_dense())
}

/// Closed-system eigenbasis with degenerate levels pulled apart by `1e-8`
/// steps, giving distinct seeds for the pole iteration.
fn seeds(system: &OpenSystem) -> Result<EigenSystem> {
    let h = system.closed_hamiltonian().map(|x| C64::new(x, 0.0));
    let mut closed = eig_complex_symmetric(&h)?;
    for k in 1..closed.dim() {
        let prev = closed.eigenvalues[k - 1].re;
        if closed.eigenvalues[k].re - prev < 1e-8 {
            closed.eigenvalues[k].re = prev + 1e-8;
        }
    }
    Ok(closed)
}

fn follow_pole(system: &OpenSystem, closed: &EigenSystem, index: usize) -> Result<ResonanceState> {
    let mut energy = closed.eigenvalues[index].re;
    let mut prev = closed.clone();
    let mut tracked = index;
    let mut step = 1.0;
    let mut last_delta = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut current = prev.clone();

    let max_iter = if system.spec().energy_dependent() { POLE_MAX_ITER } else { 1 };
    while iterations < max_iter {
        iterations += 1;
        energy = off_threshold(system, energy);
        current = eig_at(system, energy)?;
        tracked = track_pairing(&prev, &current).permutation[tracked];
        prev = current.clone();

        let target = current.eigenvalues[tracked].re;
        if !system.spec().energy_dependent() {
            energy = target;
            converged = true;
            break;
        }
        let delta = target - energy;
        if delta.abs() < POLE_TOL {
            converged = true;
            break;
        }
        if delta.abs() > last_delta {
            step *= 0.5;
        }
        last_delta = delta.abs();
        energy += step * delta;
    }

    let z = current.eigenvalues[tracked];
    let eigenvector = current.vector(tracked);
    let ok = current.c_norms_ok[tracked];
    let rigidity = rigidity_of(&current, tracked);
    Ok(ResonanceState {
        energy,
        width: -2.0 * z.im,
        z,
        a_norm: ok.then(|| eigenvector.norm_squared()),
        eigenvector,
        rigidity,
        converged,
        iterations,
    })
}

/// Solves the fixed-point equations `E = Re z_λ(E)` for every interior
/// state, seeded by the closed-system levels and following each branch by
/// eigenvector overlap. Results are sorted by `E_λ`.
pub fn solve_poles(spec: &ModelSpec) -> Result<Vec<ResonanceState>> {
    let system = OpenSystem::new(spec)?;
    solve_poles_for(&system)
}

pub fn solve_poles_for(system: &OpenSystem) -> Result<Vec<ResonanceState>> {
    let closed = seeds(system)?;
    let mut poles = (0..closed.dim())
        .into_par_iter()
        .map(|k| follow_pole(system, &closed, k))
        .collect::<Result<Vec<_>>>()?;
    poles.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(poles)
}

struct GapSample {
    objective: f64,
    gap: f64,
}

/// Smallest eigenvalue distance at `(v, E)` plus the fixed-point defect
/// `|E - Re z̄|` of that pair, so that the minimum is a self-consistent
/// coalescence also when `H_eff` does not depend on `E`.
fn gap_sample(spec: &ModelSpec, v: f64, energy: f64) -> Option<GapSample> {
    let system = OpenSystem::new(&spec.with_coupling(v)).ok()?;
    let band = heff_band(&system, energy).ok()?;
    let values = spectral::eigenvalues_complex_symmetric(&band.to_dense()).ok()?;
    let mut best: Option<(f64, C64)> = None;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let gap = (values[i] - values[j]).norm();
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, (values[i] + values[j]) / 2.0));
            }
        }
    }
    let (gap, mid) = best?;
    Some(GapSample {
        objective: gap + (energy - mid.re).abs(),
        gap,
    })
}

/// Locates a coalescence of two eigenvalues of `H_eff` in the `(v, E)`
/// plane: grid scan for the smallest gap, then simplex refinement.
pub fn find_branch_point(spec: &ModelSpec, v_range: (f64, f64), e_range: (f64, f64)) -> Result<BranchPoint> {
    find_branch_point_with(spec, &BranchSearch::new(v_range, e_range))
}

pub fn find_branch_point_with(spec: &ModelSpec, search: &BranchSearch) -> Result<BranchPoint> {
    spec.validate()?;
    let (v_lo, v_hi) = search.v_range;
    let (e_lo, e_hi) = search.e_range;
    if !(v_lo < v_hi && e_lo <= e_hi && v_lo >= 0.0 && search.grid >= 2) {
        return Err(Error::InvalidInput(format!(
            "bad search ranges v {:?}, E {:?}",
            search.v_range, search.e_range
        )));
    }
    let n = search.grid;
    let axis = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
    let points: Vec<(f64, f64)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| (axis(v_lo, v_hi, a), axis(e_lo, e_hi, b)))
        .collect();
    let scan: Vec<f64> = points
        .par_iter()
        .map(|&(v, e)| gap_sample(spec, v, e).map_or(f64::INFINITY, |s| s.objective))
        .collect();
    let start = scan
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
        .expect("non-empty grid");

    let inside = |x: &[f64]| x[0] >= v_lo && x[0] <= v_hi && x[1] >= e_lo && x[1] <= e_hi;
    let objective = |x: &[f64]| {
        if !inside(x) {
            return f64::INFINITY;
        }
        gap_sample(spec, x[0], x[1]).map_or(f64::INFINITY, |s| s.objective)
    };
    let dv = (v_hi - v_lo) / (n - 1) as f64;
    let de = ((e_hi - e_lo) / (n - 1) as f64).max(1e-6);
    let (v0, e0) = points[start];
    let step = [
        if v0 + dv > v_hi { -dv } else { dv },
        if e0 + de > e_hi { -de } else { de },
    ];
    let best = simplex::minimize(objective, &[v0, e0], &step, SimplexOptions::default());
    let (v_c, e_c) = (best.x[0], best.x[1]);

    let sample = gap_sample(spec, v_c, e_c).ok_or(Error::NotFound {
        min_gap: f64::INFINITY,
    })?;
    if !(sample.gap < search.accept_gap) {
        return Err(Error::NotFound { min_gap: sample.gap });
    }

    let system = OpenSystem::new(&spec.with_coupling(v_c))?;
    let sys = eig_at(&system, e_c)?;
    let (a, b, gap) = sys.closest_pair().expect("dimension >= 2 when a gap exists");
    Ok(BranchPoint {
        v_c,
        e_c,
        gap,
        chirality_error: chirality_error(&sys, a, b),
        rigidities: (rigidity_of(&sys, a), rigidity_of(&sys, b)),
        z_c: (sys.eigenvalues[a] + sys.eigenvalues[b]) / 2.0,
    })
}

/// Distance of the pair from `φ_a = ± i φ_b` after bilinear normalization
/// of each vector, measured relative to `‖φ_a‖`.
pub fn chirality_error(sys: &EigenSystem, a: usize, b: usize) -> f64 {
    let normalize = |k: usize| -> DVector<C64> {
        let v = sys.right_vectors.column(k).normalize();
        let s = v.dot(&v);
        if s.norm() == 0.0 {
            v
        } else {
            v / s.sqrt()
        }
    };
    let (pa, pb) = (normalize(a), normalize(b));
    let scale = pa.norm();
    let i = C64::new(0.0, 1.0);
    let plus = (&pa - &pb * i).norm();
    let minus = (&pa + &pb * i).norm();
    plus.min(minus) / scale
}
