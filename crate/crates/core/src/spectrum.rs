//! Adiabatic energies and states of the manifold Hamiltonian, eigenvalue
//! tracking through crossings, and the mixing-angle phase integrals.
//!
//! Energies in the resonant closed form use the labelling
//! `E1 = -E_minus, E2 = +E_minus, E3 = -E_plus, E4 = +E_plus`, which is *not*
//! ascending: ascending order is `E3 <= E1 <= E2 <= E4`. Numerical routines
//! ([`diagonalize`], [`track_spectrum`]) always work in ascending order.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hamiltonian::{manifold_hamiltonian, CouplingPair};
use crate::model::{manifold_basis, Atom, BasisLabel, ManifoldBasis, PureState, SystemParams};
use crate::numerics::integrate;

/// Absolute tolerance of every phase integral (radians).
pub const ANGLE_TOL: f64 = 1e-8;
/// Gap (relative to `g0`) below which two levels are considered degenerate.
pub const EXACT_GAP: f64 = 1e-8;
/// Gap (relative to `g0`) above which a gap minimum is not reported.
pub const AVOIDED_GAP: f64 = 0.5;
/// An avoided crossing must be this many times narrower than the widest gap
/// of the same level pair on both sides of it.
pub const AVOIDED_PROMINENCE: f64 = 2.0;
/// Two continuation candidates closer than this are ambiguous.
const OVERLAP_AMBIGUITY: f64 = 1e-3;
/// Couplings weaker than this (relative to `g0`) mark the uncoupled tails.
const TAIL_COUPLING: f64 = 1e-6;

/// Larger resonant eigenvalue magnitude `E_plus` of the block with base
/// photon index `n` (`n = -1` gives the bright-state energy).
pub fn energy_plus(pair: CouplingPair, n: i64) -> f64 {
    let s = pair.eta1 * pair.eta1 + pair.eta2 * pair.eta2;
    if n < 0 {
        return s.sqrt();
    }
    let nf = n as f64;
    let p = pair.eta1 * pair.eta1 * pair.eta2 * pair.eta2;
    let f = (s * s + 16.0 * (nf + 1.0) * (nf + 2.0) * p).sqrt();
    (0.5 * ((3.0 + 2.0 * nf) * s + f)).sqrt()
}

/// Signed smaller eigenvalue: `-E_minus` while `eta1 > eta2` and `+E_minus`
/// afterwards, i.e. the smooth curve followed through the exact crossing.
///
/// Uses `E_minus E_plus = sqrt((n+1)(n+2)) |eta1^2 - eta2^2|`, which avoids
/// the cancellation in the direct formula.
pub fn signed_energy_minus(pair: CouplingPair, n: i64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    let ep = energy_plus(pair, n);
    if ep == 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    ((nf + 1.0) * (nf + 2.0)).sqrt() * (pair.eta2 * pair.eta2 - pair.eta1 * pair.eta1) / ep
}

/// Closed-form resonant energies `(E1, E2, E3, E4)` at time `t` for the
/// block with base photon index `n >= 0`.
pub fn closed_form_energies(t: f64, params: &SystemParams, n: i64) -> Result<[f64; 4]> {
    if params.detuning != 0.0 {
        return Err(Error::UnsupportedRegime(
            "closed-form energies require zero detuning; use diagonalize".into(),
        ));
    }
    if n < 0 {
        return Err(Error::Domain(format!("closed form needs n >= 0, got {n}")));
    }
    let pair = CouplingPair::at(t, params);
    let em = signed_energy_minus(pair, n).abs();
    let ep = energy_plus(pair, n);
    Ok([-em, em, -ep, ep])
}

/// Ascending eigenpairs with phase-fixed eigenvectors (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenpairs {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

/// Rotates `v` so that its largest-magnitude entry is real and positive;
/// ties within 1e-12 go to the lowest index.
pub fn fix_phase(v: &mut DVector<C64>) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best_abs + 1e-12 {
            best = i;
            best_abs = z.norm();
        }
    }
    if best_abs > 0.0 {
        let phase = v[best].conj() / best_abs;
        *v *= phase;
        v[best] = C64::new(v[best].norm(), 0.0);
    }
}

pub fn diagonalize(t: f64, params: &SystemParams, basis: ManifoldBasis) -> Eigenpairs {
    let h = manifold_hamiltonian(t, params, basis);
    eigenpairs(&h.matrix)
}

pub(crate) fn eigenpairs(h: &DMatrix<C64>) -> Eigenpairs {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(h.nrows(), h.nrows());
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        fix_phase(&mut v);
        vectors.set_column(col, &v);
    }
    Eigenpairs { energies, vectors }
}

/// Exact level crossing between two tracked labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub time: f64,
    pub labels: (usize, usize),
}

/// Local gap minimum between two adjacent levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AvoidedCrossing {
    pub time: f64,
    pub gap: f64,
    /// Labels of the lower and upper level at the minimum.
    pub labels: (usize, usize),
}

/// Continuity-tracked adiabatic spectrum on a time grid.
///
/// Label `l` is the ascending index at the first grid point; afterwards each
/// label follows maximal eigenvector overlap.
#[derive(Clone, Debug)]
pub struct SpectrumCurve {
    pub basis: ManifoldBasis,
    pub times: Vec<f64>,
    pub taus: Vec<f64>,
    /// `energies[k][label]`.
    pub energies: Vec<Vec<f64>>,
    /// Phase-fixed eigenvectors, `vectors[k][label]`.
    pub vectors: Vec<Vec<DVector<C64>>>,
    /// Unit factors turning `vectors[k][label]` into the parallel-transported
    /// eigenvector (overlap between neighbours real and positive).
    pub transport: Vec<Vec<C64>>,
    pub crossings: Vec<Crossing>,
    pub avoided: Vec<AvoidedCrossing>,
}

impl SpectrumCurve {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Parallel-transported eigenvector of `label` at grid index `k`.
    pub fn transported(&self, k: usize, label: usize) -> DVector<C64> {
        &self.vectors[k][label] * self.transport[k][label]
    }

    /// Energy rank (ascending index) of `label` at grid index `k`.
    pub fn rank(&self, k: usize, label: usize) -> usize {
        let e = self.energies[k][label];
        self.energies[k]
            .iter()
            .enumerate()
            .filter(|&(l, &x)| x < e || (x == e && l < label))
            .count()
    }

    /// Label sitting at ascending position `rank` at grid index `k`.
    pub fn label_at_rank(&self, k: usize, rank: usize) -> usize {
        (0..self.dim())
            .find(|&l| self.rank(k, l) == rank)
            .expect("ranks form a permutation")
    }

    /// Trapezoid phase integral of one tracked energy over the whole grid.
    pub fn dynamical_phase(&self, label: usize) -> f64 {
        self.times
            .windows(2)
            .enumerate()
            .map(|(k, w)| 0.5 * (w[1] - w[0]) * (self.energies[k][label] + self.energies[k + 1][label]))
            .sum()
    }
}

fn degeneracy_tolerance(pair: CouplingPair, params: &SystemParams, basis: ManifoldBasis) -> f64 {
    let photon_scale = ((basis.n.max(0) + 2) as f64).sqrt();
    let scale = params.detuning.abs().max(photon_scale * pair.eta1.max(pair.eta2));
    1e-10 * scale + f64::MIN_POSITIVE
}

/// Groups ascending energies into clusters whose neighbours differ by less
/// than `tol`.
fn clusters(energies: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        match out.last_mut() {
            Some(last) if e - energies[*last.last().unwrap()] < tol => last.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Tracks eigenvalues and eigenvectors along `grid` (physical times).
pub fn track_spectrum(params: &SystemParams, basis: ManifoldBasis, grid: &[f64]) -> Result<SpectrumCurve> {
    if grid.is_empty() {
        return Err(Error::Domain("empty time grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must be strictly increasing".into()));
    }
    let dim = basis.dim();
    let one = C64::new(1.0, 0.0);

    let first = diagonalize(grid[0], params, basis);
    let mut energies = vec![first.energies.clone()];
    let mut vectors = vec![(0..dim).map(|j| first.vectors.column(j).into_owned()).collect::<Vec<_>>()];
    let mut transport = vec![vec![one; dim]];

    for (k, &t) in grid.iter().enumerate().skip(1) {
        let eig = diagonalize(t, params, basis);
        let pair = CouplingPair::at(t, params);
        let tol = degeneracy_tolerance(pair, params, basis);
        let groups = clusters(&eig.energies, tol);
        let prev = &vectors[k - 1];

        // Weight of every previous label inside every cluster subspace.
        let weights: Vec<Vec<f64>> = prev
            .iter()
            .map(|v| {
                groups
                    .iter()
                    .map(|g| g.iter().map(|&j| eig.vectors.column(j).dotc(v).norm_sqr()).sum::<f64>().sqrt())
                    .collect()
            })
            .collect();

        let mut assigned: Vec<Option<usize>> = vec![None; groups.len()];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
        for (label, w) in weights.iter().enumerate() {
            let mut order: Vec<usize> = (0..groups.len()).collect();
            order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
            let best = order[0];
            let second = order.get(1).map(|&g| w[g]).unwrap_or(0.0);
            if w[best] < 0.5 || w[best] - second < OVERLAP_AMBIGUITY {
                return Err(Error::Refinement {
                    time: t,
                    suggested_points: 2 * grid.len(),
                });
            }
            members[best].push(label);
            assigned[best] = Some(label);
        }
        if members.iter().zip(&groups).any(|(m, g)| m.len() != g.len()) {
            return Err(Error::Refinement {
                time: t,
                suggested_points: 2 * grid.len(),
            });
        }

        let mut e_row = vec![0.0; dim];
        let mut v_row = vec![DVector::zeros(dim); dim];
        for (group, labels) in groups.iter().zip(&members) {
            if group.len() == 1 {
                let label = labels[0];
                e_row[label] = eig.energies[group[0]];
                v_row[label] = eig.vectors.column(group[0]).into_owned();
                continue;
            }
            // Degenerate: continue each label by its projection onto the
            // cluster subspace, orthonormalized in label order.
            let mut basis_vecs: Vec<DVector<C64>> = Vec::new();
            let mut sorted = labels.clone();
            sorted.sort_by(|&a, &b| energies[k - 1][a].total_cmp(&energies[k - 1][b]));
            for (slot, &label) in sorted.iter().enumerate() {
                let mut v = DVector::zeros(dim);
                for &j in group {
                    let col = eig.vectors.column(j);
                    v += col * col.dotc(&prev[label]);
                }
                for b in &basis_vecs {
                    let c = b.dotc(&v);
                    v -= b * c;
                }
                let norm = v.norm();
                if norm < 1e-6 {
                    return Err(Error::Refinement {
                        time: t,
                        suggested_points: 2 * grid.len(),
                    });
                }
                v.unscale_mut(norm);
                fix_phase(&mut v);
                basis_vecs.push(v.clone());
                e_row[label] = eig.energies[group[slot]];
                v_row[label] = v;
            }
        }

        let t_row: Vec<C64> = (0..dim)
            .map(|l| {
                let o = prev[l].dotc(&v_row[l]);
                let tr = transport[k - 1][l];
                if o.norm() == 0.0 {
                    tr
                } else {
                    tr * o.conj() / o.norm()
                }
            })
            .collect();

        energies.push(e_row);
        vectors.push(v_row);
        transport.push(t_row);
    }

    let mut curve = SpectrumCurve {
        basis,
        times: grid.to_vec(),
        taus: grid.iter().map(|&t| params.tau(t)).collect(),
        energies,
        vectors,
        transport,
        crossings: Vec::new(),
        avoided: Vec::new(),
    };
    detect_crossings(&mut curve, params);
    Ok(curve)
}

fn detect_crossings(curve: &mut SpectrumCurve, params: &SystemParams) {
    let dim = curve.dim();
    let nt = curve.times.len();
    let g0 = params.g0.max(f64::MIN_POSITIVE);
    let coupled: Vec<bool> = curve
        .times
        .iter()
        .map(|&t| CouplingPair::at(t, params).norm() > TAIL_COUPLING * g0)
        .collect();

    // Exact crossings: degenerate grid points, or order swaps between points.
    let mut flagged_at: Vec<Option<(usize, usize)>> = vec![None; nt];
    for k in 0..nt {
        if !coupled[k] {
            continue;
        }
        for r in 0..dim.saturating_sub(1) {
            let lo = curve.label_at_rank(k, r);
            let hi = curve.label_at_rank(k, r + 1);
            if curve.energies[k][hi] - curve.energies[k][lo] < EXACT_GAP * g0 {
                let pair = (lo.min(hi), lo.max(hi));
                flagged_at[k] = Some(pair);
                curve.crossings.push(Crossing {
                    time: curve.times[k],
                    labels: pair,
                });
            }
        }
    }
    for k in 0..nt.saturating_sub(1) {
        if !(coupled[k] && coupled[k + 1]) {
            continue;
        }
        for a in 0..dim {
            for b in (a + 1)..dim {
                let d0 = curve.energies[k][a] - curve.energies[k][b];
                let d1 = curve.energies[k + 1][a] - curve.energies[k + 1][b];
                if d0 * d1 < 0.0 {
                    let already = flagged_at[k] == Some((a, b)) || flagged_at[k + 1] == Some((a, b));
                    if !already {
                        let frac = d0 / (d0 - d1);
                        let time = curve.times[k] + frac * (curve.times[k + 1] - curve.times[k]);
                        curve.crossings.push(Crossing { time, labels: (a, b) });
                    }
                }
            }
        }
    }
    curve.crossings.sort_by(|x, y| x.time.total_cmp(&y.time));

    // Avoided crossings: pronounced interior minima of adjacent gaps with a
    // stable pair of labels.
    for r in 0..dim.saturating_sub(1) {
        let rank_gap: Vec<f64> = (0..nt)
            .map(|k| curve.energies[k][curve.label_at_rank(k, r + 1)] - curve.energies[k][curve.label_at_rank(k, r)])
            .collect();
        for k in 1..nt.saturating_sub(1) {
            if !coupled[k] {
                continue;
            }
            let pair_at = |i: usize| (curve.label_at_rank(i, r), curve.label_at_rank(i, r + 1));
            let (lo, hi) = pair_at(k);
            if pair_at(k - 1) != (lo, hi) || pair_at(k + 1) != (lo, hi) {
                continue;
            }
            let gap = |i: usize| curve.energies[i][hi] - curve.energies[i][lo];
            let (g_prev, g_here, g_next) = (gap(k - 1), gap(k), gap(k + 1));
            if !(g_here < g_prev && g_here <= g_next) {
                continue;
            }
            let (time, min_gap) = parabolic_min(
                (curve.times[k - 1], g_prev),
                (curve.times[k], g_here),
                (curve.times[k + 1], g_next),
            );
            let left = rank_gap[..k].iter().copied().fold(0.0, f64::max);
            let right = rank_gap[k..].iter().copied().fold(0.0, f64::max);
            let prominent = left.min(right) >= AVOIDED_PROMINENCE * min_gap;
            if prominent && min_gap > EXACT_GAP * g0 && min_gap < AVOIDED_GAP * g0 {
                curve.avoided.push(AvoidedCrossing {
                    time,
                    gap: min_gap,
                    labels: (lo, hi),
                });
            }
        }
    }
}

fn parabolic_min(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let denom = (a.0 - b.0) * (a.0 - c.0) * (b.0 - c.0);
    if denom == 0.0 {
        return b;
    }
    let pa = (c.0 * (b.1 - a.1) + b.0 * (a.1 - c.1) + a.0 * (c.1 - b.1)) / denom;
    let pb = (c.0 * c.0 * (a.1 - b.1) + b.0 * b.0 * (c.1 - a.1) + a.0 * a.0 * (b.1 - c.1)) / denom;
    if pa <= 0.0 {
        return b;
    }
    let x = -pb / (2.0 * pa);
    if x < a.0 || x > c.0 {
        return b;
    }
    let pc = a.1 - pa * a.0 * a.0 - pb * a.0;
    (x, (pa * x * x + pb * x + pc).max(0.0))
}

/// Dimensionless time where `eta1 = eta2`: `-ln(epsilon) / (4 delta)`.
pub fn crossing_time(params: &SystemParams) -> Result<f64> {
    if !(params.epsilon > 0.0) {
        return Err(Error::Domain("crossing time needs epsilon > 0".into()));
    }
    if params.delta == 0.0 {
        return if params.epsilon == 1.0 {
            Err(Error::DegenerateEverywhere)
        } else {
            Err(Error::NoCrossing("delta = 0 with unequal couplings".into()))
        };
    }
    Ok(-params.epsilon.ln() / (4.0 * params.delta))
}

/// Dimensionless integration range: wide enough that the couplings are
/// below 1e-15 of `g0` outside.
fn tau_range(params: &SystemParams) -> (f64, f64) {
    let reach = params.delta.abs() + 6.0;
    (-reach, reach)
}

fn require_resonant(params: &SystemParams, what: &str) -> Result<()> {
    if params.detuning != 0.0 {
        return Err(Error::UnsupportedRegime(format!("{what} is defined for zero detuning")));
    }
    Ok(())
}

fn pair_at_tau(tau: f64, params: &SystemParams) -> CouplingPair {
    CouplingPair::at(params.time(tau), params)
}

/// Mixing angle `phi_n`: phase integral of the top energy over the transit,
/// in physical time (`2 sigma` times the dimensionless integral).
pub fn phi_angle(n: i64, params: &SystemParams) -> Result<f64> {
    require_resonant(params, "phi_n")?;
    if n < -1 {
        return Err(Error::Domain(format!("phi_n needs n >= -1, got {n}")));
    }
    let (lo, hi) = tau_range(params);
    let jac = 2.0 * params.sigma;
    let q = integrate(|tau| energy_plus(pair_at_tau(tau, params), n), lo, hi, ANGLE_TOL / jac, 28);
    Ok(jac * q.value)
}

/// Phase `theta_n` picked up along `E1` before the crossing and `E2` after it.
pub fn theta_angle(n: i64, params: &SystemParams) -> Result<f64> {
    require_resonant(params, "theta_n")?;
    if n < 0 {
        // the one-excitation block has no E1/E2 pair; the angle vanishes
        return Ok(0.0);
    }
    let (lo, hi) = tau_range(params);
    let jac = 2.0 * params.sigma;
    let f = |tau: f64| signed_energy_minus(pair_at_tau(tau, params), n);
    let split = crossing_time(params).ok().filter(|&tc| tc > lo && tc < hi);
    let tol = ANGLE_TOL / jac;
    let value = match split {
        Some(tc) => integrate(f, lo, tc, 0.5 * tol, 14).value + integrate(f, tc, hi, 0.5 * tol, 14).value,
        None => integrate(f, lo, hi, tol, 28).value,
    };
    Ok(jac * value)
}

/// Large-detuning SWAP phase, closed form
/// `2 sigma g0^2 (1 + epsilon^2) sqrt(pi/2) / detuning`.
pub fn theta_big(params: &SystemParams) -> Result<f64> {
    if params.detuning == 0.0 {
        return Err(Error::Domain("Theta diverges at zero detuning".into()));
    }
    let g0 = params.g0;
    Ok(2.0 * params.sigma * g0 * g0 * (1.0 + params.epsilon * params.epsilon) * (PI / 2.0).sqrt() / params.detuning)
}

/// Same phase by quadrature of `(eta1^2 + eta2^2) / detuning` over time.
pub fn theta_big_quadrature(params: &SystemParams) -> Result<f64> {
    if params.detuning == 0.0 {
        return Err(Error::Domain("Theta diverges at zero detuning".into()));
    }
    let (lo, hi) = tau_range(params);
    let jac = 2.0 * params.sigma;
    let q = integrate(
        |tau| {
            let p = pair_at_tau(tau, params);
            (p.eta1 * p.eta1 + p.eta2 * p.eta2) / params.detuning
        },
        lo,
        hi,
        ANGLE_TOL / jac,
        28,
    );
    Ok(jac * q.value)
}

/// Zero-energy state `(eta1 |0;ge> - eta2 |0;eg>) / norm` of the
/// one-excitation block.
pub fn dark_state(t: f64, params: &SystemParams) -> Result<PureState> {
    let pair = CouplingPair::at(t, params);
    let norm = pair.norm();
    if norm == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    let block = manifold_basis(1)?;
    PureState::from_labels(
        block,
        &[
            (BasisLabel::new(0, Atom::Ground, Atom::Excited), C64::new(pair.eta1 / norm, 0.0)),
            (BasisLabel::new(0, Atom::Excited, Atom::Ground), C64::new(-pair.eta2 / norm, 0.0)),
        ],
    )
}

/// All mixing angles of one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingAngles {
    pub n: i64,
    pub phi_n: f64,
    pub theta_n: f64,
    /// Large-detuning SWAP phase; `None` at zero detuning.
    pub theta_big: Option<f64>,
    /// Dimensionless crossing time, when the couplings cross.
    pub tau_c: Option<f64>,
}

impl MixingAngles {
    /// `phi_n` and `theta_n` are evaluated at zero detuning.
    pub fn evaluate(n: i64, params: &SystemParams) -> Result<Self> {
        let resonant = params.with_detuning(0.0);
        Ok(MixingAngles {
            n,
            phi_n: phi_angle(n, &resonant)?,
            theta_n: theta_angle(n, &resonant)?,
            theta_big: if params.detuning != 0.0 { Some(theta_big(params)?) } else { None },
            tau_c: crossing_time(params).ok(),
        })
    }
}

/// Uniform grid of `points` physical times over the parameter window.
pub fn uniform_grid(t0: f64, t1: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![t0],
        _ => (0..points)
            .map(|i| t0 + (t1 - t0) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}
