//! The three model systems and the leads attached to them.
//!
//! * `chain`: `N` sites with hopping `-1`, coupled with hopping `v` to two
//!   semi-infinite one-dimensional leads at sites `1` and `N`.
//! * `double_dot`: sites `(dot_L, wire, dot_R)` with internal coupling `u`
//!   and wide-band leads at both dots, `Σ = -i v²`.
//! * `billiard2d`: square lattice, onsite `+4`, hopping `-1`, Dirichlet walls,
//!   an optional circular disk of removed sites, and two strip leads of width
//!   `w` attached to the left and right columns.
//!
//! All leads are identical pairs, so channel data is shared by both sides.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Distance to a lead threshold below which the energy counts as on it.
pub const THRESHOLD_TOL: f64 = 1e-12;

/// Shift applied by callers when an energy lands exactly on a threshold.
pub const THRESHOLD_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Chain,
    DoubleDot,
    Billiard2d,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Chain => "chain",
            ModelKind::DoubleDot => "double_dot",
            ModelKind::Billiard2d => "billiard2d",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(ModelKind::Chain),
            "double_dot" | "double-dot" => Ok(ModelKind::DoubleDot),
            "billiard2d" | "billiard" => Ok(ModelKind::Billiard2d),
            other => Err(Error::InvalidInput(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

/// Declarative description of one model system.
///
/// Fields that do not apply to `kind` are carried along but ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Number of chain sites.
    pub chain_len: usize,
    /// Billiard lattice size in sites.
    pub nx: usize,
    pub ny: usize,
    /// Lead-system coupling `v` (hopping units).
    pub coupling_v: f64,
    /// Double-dot internal coupling `u`.
    pub internal_u: f64,
    /// Billiard lead width in sites.
    pub lead_width: usize,
    pub disk_radius: f64,
    /// Disk center in site coordinates; `None` selects the default offset
    /// center `((nx-1)/2 + w/4, (ny-1)/2 + w/4)`.
    pub disk_center: Option<(f64, f64)>,
}

impl ModelSpec {
    pub fn chain(chain_len: usize, coupling_v: f64) -> Self {
        Self {
            kind: ModelKind::Chain,
            chain_len,
            coupling_v,
            ..Self::base()
        }
    }

    pub fn double_dot(internal_u: f64, coupling_v: f64) -> Self {
        Self {
            kind: ModelKind::DoubleDot,
            internal_u,
            coupling_v,
            ..Self::base()
        }
    }

    /// Billiard of `4w × 5w` sites with strip leads of width `w`.
    pub fn billiard(lead_width: usize, coupling_v: f64, disk_radius: f64) -> Self {
        Self {
            kind: ModelKind::Billiard2d,
            nx: 4 * lead_width,
            ny: 5 * lead_width,
            lead_width,
            coupling_v,
            disk_radius,
            ..Self::base()
        }
    }

    fn base() -> Self {
        Self {
            kind: ModelKind::Chain,
            chain_len: 6,
            nx: 32,
            ny: 40,
            coupling_v: 0.5,
            internal_u: 2f64.sqrt() / 16.0,
            lead_width: 8,
            disk_radius: 0.0,
            disk_center: None,
        }
    }

    pub fn with_coupling(&self, coupling_v: f64) -> Self {
        Self {
            coupling_v,
            ..self.clone()
        }
    }

    pub fn disk_center(&self) -> (f64, f64) {
        self.disk_center.unwrap_or_else(|| {
            let shift = self.lead_width as f64 / 4.0;
            (
                (self.nx as f64 - 1.0) / 2.0 + shift,
                (self.ny as f64 - 1.0) / 2.0 + shift,
            )
        })
    }

    /// `false` when `H_eff` does not depend on the energy (wide-band leads).
    pub fn energy_dependent(&self) -> bool {
        self.kind != ModelKind::DoubleDot
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.coupling_v.is_finite() && self.coupling_v >= 0.0) {
            return bad(format!("coupling_v must be finite and >= 0, got {}", self.coupling_v));
        }
        match self.kind {
            ModelKind::Chain => {
                if self.chain_len < 1 {
                    return bad("chain needs at least one site".into());
                }
            }
            ModelKind::DoubleDot => {
                if !self.internal_u.is_finite() {
                    return bad("internal_u must be finite".into());
                }
            }
            ModelKind::Billiard2d => {
                if self.nx < 2 || self.ny < 1 {
                    return bad(format!("billiard of {}x{} sites is too small", self.nx, self.ny));
                }
                if self.lead_width < 1 || self.lead_width > self.ny {
                    return bad(format!(
                        "lead width {} must lie in 1..={}",
                        self.lead_width, self.ny
                    ));
                }
                let r = self.disk_radius;
                if !(r.is_finite() && r >= 0.0) {
                    return bad(format!("disk radius must be >= 0, got {r}"));
                }
                if r > 0.0 {
                    let (cx, cy) = self.disk_center();
                    let fits = cx - r >= 0.0
                        && cx + r <= self.nx as f64 - 1.0
                        && cy - r >= 0.0
                        && cy + r <= self.ny as f64 - 1.0;
                    if !fits {
                        return bad(format!(
                            "disk of radius {r} at ({cx}, {cy}) does not fit in {}x{}",
                            self.nx, self.ny
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One transverse channel of a lead at a given energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    /// Transverse mode number, starting at 1.
    pub mode: usize,
    /// Longitudinal wavenumber in `(0, π)`.
    pub k: f64,
    pub sin_k: f64,
    /// Energy at which the channel opens.
    pub threshold: f64,
    /// `χ_m` over the lead cross-section (a single `1.0` for 1-D leads).
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    /// Propagating channels, ordered by mode number.
    pub channels: Vec<Channel>,
    /// All branch points of the lead self-energy, ascending.
    pub thresholds: Vec<f64>,
}

/// Self-energy block of one lead on its contact sites.
#[derive(Debug, Clone)]
pub struct LeadSelfEnergy {
    pub side: Side,
    pub sites: Vec<usize>,
    pub block: DMatrix<C64>,
}

/// Retarded surface Green function of a semi-infinite 1-D lead with
/// hopping `-1`, as a function of the energy `x` measured from the band
/// center. `-e^{ik}` with `x = -2 cos k` inside the band, the decaying real
/// branch outside.
pub fn surface_sigma(x: f64) -> C64 {
    if x.abs() < 2.0 {
        C64::new(x / 2.0, -(1.0 - x * x / 4.0).sqrt())
    } else {
        C64::new((x - x.signum() * (x * x - 4.0).sqrt()) / 2.0, 0.0)
    }
}

/// Transverse threshold `ε_m = 2 - 2 cos(π m / (w + 1))` of a strip lead.
pub fn strip_threshold(mode: usize, width: usize) -> f64 {
    2.0 - 2.0 * (PI * mode as f64 / (width as f64 + 1.0)).cos()
}

/// `χ_m(y) = sqrt(2/(w+1)) sin(π m y / (w+1))`, `y = 1..=w`.
pub fn strip_profile(mode: usize, width: usize) -> Vec<f64> {
    let norm = (2.0 / (width as f64 + 1.0)).sqrt();
    (1..=width)
        .map(|y| norm * (PI * (mode * y) as f64 / (width as f64 + 1.0)).sin())
        .collect()
}

/// A validated model with its lattice laid out: interior sites, the closed
/// Hamiltonian and the contact sites of both leads.
#[derive(Debug, Clone)]
pub struct OpenSystem {
    spec: ModelSpec,
    dim: usize,
    bandwidth: usize,
    /// Entries `(i, j, value)` of `H_B` with `i <= j`.
    closed: Vec<(usize, usize, f64)>,
    contacts: [Vec<usize>; 2],
    positions: Vec<(usize, usize)>,
}

impl OpenSystem {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut closed = Vec::new();
        let (dim, contacts, positions) = match spec.kind {
            ModelKind::Chain => {
                let n = spec.chain_len;
                for i in 0..n - 1 {
                    closed.push((i, i + 1, -1.0));
                }
                let positions = (0..n).map(|i| (i, 0)).collect();
                (n, [vec![0], vec![n - 1]], positions)
            }
            ModelKind::DoubleDot => {
                let u = spec.internal_u;
                closed.push((0, 1, u));
                closed.push((1, 2, u));
                (3, [vec![0], vec![2]], vec![(0, 0), (1, 0), (2, 0)])
            }
            ModelKind::Billiard2d => {
                let (nx, ny) = (spec.nx, spec.ny);
                let (cx, cy) = spec.disk_center();
                let r2 = spec.disk_radius * spec.disk_radius;
                let mut index = vec![None; nx * ny];
                let mut positions = Vec::new();
                for x in 0..nx {
                    for y in 0..ny {
                        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                        if spec.disk_radius > 0.0 && dx * dx + dy * dy < r2 {
                            continue;
                        }
                        index[x * ny + y] = Some(positions.len());
                        positions.push((x, y));
                    }
                }
                for (i, &(x, y)) in positions.iter().enumerate() {
                    closed.push((i, i, 4.0));
                    if y + 1 < ny {
                        if let Some(j) = index[x * ny + y + 1] {
                            closed.push((i, j, -1.0));
                        }
                    }
                    if x + 1 < nx {
                        if let Some(j) = index[(x + 1) * ny + y] {
                            closed.push((i, j, -1.0));
                        }
                    }
                }
                let y0 = (ny - spec.lead_width) / 2;
                let column = |x: usize| -> Vec<usize> {
                    (y0..y0 + spec.lead_width)
                        .map(|y| index[x * ny + y].expect("contact sites lie outside the disk"))
                        .collect()
                };
                let contacts = [column(0), column(nx - 1)];
                (positions.len(), contacts, positions)
            }
        };
        let mut bandwidth = closed.iter().map(|&(i, j, _)| j - i).max().unwrap_or(0);
        for sites in &contacts {
            let lo = sites.iter().min().copied().unwrap_or(0);
            let hi = sites.iter().max().copied().unwrap_or(0);
            bandwidth = bandwidth.max(hi - lo);
        }
        Ok(Self {
            spec: spec.clone(),
            dim,
            bandwidth,
            closed,
            contacts,
            positions,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest `|i - j|` of any nonzero entry of `H_eff`.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn contacts(&self, side: Side) -> &[usize] {
        &self.contacts[side.index()]
    }

    /// Lattice coordinates of each interior site.
    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn closed_entries(&self) -> &[(usize, usize, f64)] {
        &self.closed
    }

    pub fn closed_hamiltonian(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, value) in &self.closed {
            h[(i, j)] = value;
            h[(j, i)] = value;
        }
        h
    }

    /// Square-root branch points of the lead self-energy.
    pub fn thresholds(&self) -> Vec<f64> {
        match self.spec.kind {
            ModelKind::Chain => vec![-2.0, 2.0],
            ModelKind::DoubleDot => Vec::new(),
            ModelKind::Billiard2d => {
                let w = self.spec.lead_width;
                let mut all: Vec<f64> = (1..=w)
                    .flat_map(|m| {
                        let e = strip_threshold(m, w);
                        [e, e + 4.0]
                    })
                    .collect();
                all.sort_by(f64::total_cmp);
                all
            }
        }
    }

    pub fn check_threshold(&self, energy: f64) -> Result<()> {
        match self
            .thresholds()
            .into_iter()
            .find(|t| (energy - t).abs() <= THRESHOLD_TOL)
        {
            Some(threshold) => Err(Error::LeadThreshold { energy, threshold }),
            None => Ok(()),
        }
    }

    /// Propagating channels of either lead at `energy`.
    pub fn channel_data(&self, energy: f64) -> ChannelData {
        let thresholds = self.thresholds();
        let channels = match self.spec.kind {
            ModelKind::Chain => propagating(energy, 0.0, 1, vec![1.0]).into_iter().collect(),
            // wide-band leads: energy independent, sin k = 1 by construction
            ModelKind::DoubleDot => vec![Channel {
                mode: 1,
                k: PI / 2.0,
                sin_k: 1.0,
                threshold: f64::NEG_INFINITY,
                profile: vec![1.0],
            }],
            ModelKind::Billiard2d => {
                let w = self.spec.lead_width;
                (1..=w)
                    .filter_map(|m| {
                        propagating(energy, strip_threshold(m, w) + 2.0, m, strip_profile(m, w))
                    })
                    .collect()
            }
        };
        ChannelData {
            channels,
            thresholds,
        }
    }

    /// Self-energy blocks `v² g_C(E)` of both leads on their contact sites.
    pub fn self_energy(&self, energy: f64) -> Result<[LeadSelfEnergy; 2]> {
        self.check_threshold(energy)?;
        let v2 = self.spec.coupling_v * self.spec.coupling_v;
        let block = match self.spec.kind {
            ModelKind::Chain => DMatrix::from_element(1, 1, surface_sigma(energy) * v2),
            ModelKind::DoubleDot => DMatrix::from_element(1, 1, C64::new(0.0, -v2)),
            ModelKind::Billiard2d => {
                let w = self.spec.lead_width;
                let mut block = DMatrix::zeros(w, w);
                for m in 1..=w {
                    let sigma = surface_sigma(energy - strip_threshold(m, w) - 2.0) * v2;
                    let chi = strip_profile(m, w);
                    for a in 0..w {
                        for b in 0..w {
                            block[(a, b)] += sigma * (chi[a] * chi[b]);
                        }
                    }
                }
                block
            }
        };
        Ok([Side::Left, Side::Right].map(|side| LeadSelfEnergy {
            side,
            sites: self.contacts[side.index()].clone(),
            block: block.clone(),
        }))
    }
}

fn propagating(energy: f64, center: f64, mode: usize, profile: Vec<f64>) -> Option<Channel> {
    let x = energy - center;
    if x.abs() >= 2.0 {
        return None;
    }
    let k = (-x / 2.0).acos();
    Some(Channel {
        mode,
        k,
        sin_k: k.sin(),
        threshold: center - 2.0,
        profile,
    })
}

/// `H_B` of the model as a dense real symmetric matrix.
pub fn build_closed_hamiltonian(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    Ok(OpenSystem::new(spec)?.closed_hamiltonian())
}

pub fn lead_self_energy(spec: &ModelSpec, energy: f64) -> Result<[LeadSelfEnergy; 2]> {
    OpenSystem::new(spec)?.self_energy(energy)
}

/// # Panics
///
/// If `spec` is invalid.
pub fn channel_data(spec: &ModelSpec, energy: f64) -> ChannelData {
    OpenSystem::new(spec)
        .expect("channel_data needs a valid spec")
        .channel_data(energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sorted_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn two_site_chain() {
        let h = build_closed_hamiltonian(&ModelSpec::chain(2, 0.5)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
        let e = sorted_eigenvalues(&h);
        assert_abs_diff_eq!(e[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn double_dot_levels() {
        let u = 2f64.sqrt() / 16.0;
        let e = sorted_eigenvalues(&build_closed_hamiltonian(&ModelSpec::double_dot(u, 0.3)).unwrap());
        assert_abs_diff_eq!(e[0], -0.125, epsilon = 1e-14);
        assert_abs_diff_eq!(e[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[2], 0.125, epsilon = 1e-14);
    }

    #[test]
    fn empty_rectangle_lowest_level() {
        let spec = ModelSpec {
            nx: 4,
            ny: 5,
            lead_width: 1,
            ..ModelSpec::billiard(1, 1.0, 0.0)
        };
        let e = sorted_eigenvalues(&build_closed_hamiltonian(&spec).unwrap());
        let expect = 4.0 - 2.0 * (PI / 5.0).cos() - 2.0 * (PI / 6.0).cos();
        assert_abs_diff_eq!(e[0], expect, epsilon = 1e-12);
        // full separable spectrum
        let mut all: Vec<f64> = (1..=4)
            .flat_map(|a| (1..=5).map(move |b| (a, b)))
            .map(|(a, b)| 4.0 - 2.0 * (PI * a as f64 / 5.0).cos() - 2.0 * (PI * b as f64 / 6.0).cos())
            .collect();
        all.sort_by(f64::total_cmp);
        for (x, y) in e.iter().zip(&all) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn disk_removes_sites() {
        let plain = OpenSystem::new(&ModelSpec::billiard(8, 1.0, 0.0)).unwrap();
        let holed = OpenSystem::new(&ModelSpec::billiard(8, 1.0, 6.0)).unwrap();
        assert_eq!(plain.dim(), 32 * 40);
        assert!(holed.dim() < plain.dim());
        let removed = plain.dim() - holed.dim();
        // lattice points inside a radius-6 circle: roughly π r²
        assert!((90..=130).contains(&removed), "{removed}");
        assert!(holed.bandwidth() <= 40);
        assert_eq!(holed.contacts(Side::Left).len(), 8);
    }

    #[test]
    fn invalid_specs() {
        assert!(ModelSpec::chain(0, 0.5).validate().is_err());
        assert!(ModelSpec::chain(3, -0.1).validate().is_err());
        assert!(ModelSpec::billiard(8, 1.0, 20.0).validate().is_err());
        let wide = ModelSpec {
            lead_width: 50,
            ..ModelSpec::billiard(8, 1.0, 0.0)
        };
        assert!(wide.validate().is_err());
    }

    #[test]
    fn chain_self_energy_band_center() {
        let sigma = lead_self_energy(&ModelSpec::chain(6, 1.0), 0.0).unwrap();
        for lead in &sigma {
            assert_abs_diff_eq!(lead.block[(0, 0)].re, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(lead.block[(0, 0)].im, -1.0, epsilon = 1e-15);
        }
        assert_eq!(sigma[1].sites, vec![5]);
    }

    #[test]
    fn double_dot_wide_band() {
        for e in [-1.0, 0.0, 3.0] {
            let sigma = lead_self_energy(&ModelSpec::double_dot(0.1, 0.5), e).unwrap();
            assert_eq!(sigma[0].block[(0, 0)], C64::new(0.0, -0.25));
            assert_eq!(sigma[0].sites, vec![0]);
            assert_eq!(sigma[1].sites, vec![2]);
        }
    }

    #[test]
    fn chain_near_lower_threshold() {
        let delta = 1e-6;
        let s = surface_sigma(-2.0 + delta);
        assert!(s.im < 0.0);
        // sin k ≈ sqrt(E + 2) near k = 0
        assert_abs_diff_eq!(s.im, -delta.sqrt(), epsilon = 1e-9);
        assert!(matches!(
            lead_self_energy(&ModelSpec::chain(3, 1.0), -2.0),
            Err(Error::LeadThreshold { .. })
        ));
    }

    #[test]
    fn chain_channels() {
        let spec = ModelSpec::chain(6, 0.5);
        let data = channel_data(&spec, 0.0);
        assert_eq!(data.channels.len(), 1);
        assert_abs_diff_eq!(data.channels[0].k, PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(data.channels[0].sin_k, 1.0, epsilon = 1e-15);
        assert!(channel_data(&spec, 2.5).channels.is_empty());
        assert!(channel_data(&spec, -2.5).channels.is_empty());
    }

    #[test]
    fn strip_channel_count_above_second_threshold() {
        let spec = ModelSpec::billiard(8, 1.0, 0.0);
        let e2 = 4.0 - 2.0 * (2.0 * PI / 9.0).cos() - 2.0;
        assert_eq!(channel_data(&spec, e2 + 1e-6).channels.len(), 2);
        assert_eq!(channel_data(&spec, e2 - 1e-6).channels.len(), 1);
    }

    #[test]
    fn transverse_profiles_orthonormal() {
        for w in [1, 3, 8] {
            for m in 1..=w {
                for n in 1..=w {
                    let dot: f64 = strip_profile(m, w)
                        .iter()
                        .zip(strip_profile(n, w))
                        .map(|(a, b)| a * b)
                        .sum();
                    let expect = if m == n { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(dot, expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn laplacian_spectrum_within_bounds() {
        let h = build_closed_hamiltonian(&ModelSpec::billiard(2, 1.0, 1.5)).unwrap();
        assert_eq!(h, h.transpose());
        for e in sorted_eigenvalues(&h) {
            assert!((0.0..=8.0).contains(&e));
        }
        for e in sorted_eigenvalues(&build_closed_hamiltonian(&ModelSpec::chain(9, 0.5)).unwrap()) {
            assert!((-2.0..=2.0).contains(&e));
        }
    }

    proptest! {
        #[test]
        fn self_energy_is_retarded(e in -6.0f64..6.0) {
            prop_assume!((e.abs() - 2.0).abs() > 1e-9);
            prop_assert!(surface_sigma(e).im <= 0.0);
            prop_assert!(surface_sigma(e).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn strip_self_energy_is_retarded(e in 0.0f64..8.5) {
            let spec = ModelSpec::billiard(3, 0.7, 0.0);
            let sys = OpenSystem::new(&spec).unwrap();
            prop_assume!(sys.check_threshold(e).is_ok());
            let sigma = sys.self_energy(e).unwrap();
            for a in 0..3 {
                prop_assert!(sigma[0].block[(a, a)].im <= 1e-15);
            }
        }
    }

    #[test]
    fn sigma_is_continuous_across_thresholds() {
        for t in [-2.0f64, 2.0] {
            let inside = surface_sigma(t - t.signum() * 1e-10);
            let outside = surface_sigma(t + t.signum() * 1e-10);
            assert!((inside - outside).norm() < 1e-4);
        }
    }
}
