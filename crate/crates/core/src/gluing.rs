//! Coverings of a time slab by lenses and the inductive global solve.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{coeff_weights, tilted_candidates, JetSpace, JetVector};
use crate::lens::{default_tilt, glue_step, Context, LensOptions, LensRegion, LensSpec};

/// Translated lens template. Lens `ℓ` has
/// `t_min = τ_min + first_offset + ℓ·stride`, `t_max = t_min + height` and region
/// `U = {t_min - delta - pad ≤ τ ≤ t_max + pad}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoveringSpec {
    pub height: f64,
    pub delta: f64,
    pub grid_count: usize,
    pub stride: f64,
    /// Defaults to `delta`, the earliest offset at which `η_{t_min}` reaches 1.
    #[serde(default)]
    pub first_offset: Option<f64>,
    /// Defaults to the kernel range.
    #[serde(default)]
    pub pad: Option<f64>,
    #[serde(default = "default_tilt")]
    pub tilt: f64,
    /// Number of lenses; by default as many as fit below the latest time.
    #[serde(default)]
    pub count: Option<usize>,
}

impl CoveringSpec {
    pub fn new(height: f64, delta: f64, grid_count: usize, stride: f64) -> Self {
        CoveringSpec {
            height,
            delta,
            grid_count,
            stride,
            first_offset: None,
            pad: None,
            tilt: default_tilt(),
            count: None,
        }
    }
}

pub struct Covering {
    pub spec: CoveringSpec,
    pub lenses: Vec<LensRegion>,
    /// `ℓ → ℓ′` iff `W_{ℓ′} ∩ Z_ℓ ≠ ∅`.
    pub future_edges: Vec<(usize, usize)>,
    /// `reach[ℓ]`: lenses reachable from `ℓ` by a nonempty path.
    pub reach: Vec<Vec<usize>>,
    /// Latest band, where lenses cannot place `W` because their cutoff
    /// transition and compact range would stick out of `M`.
    pub top_margin: Vec<usize>,
    /// Earliest band, below the first time at which `η_{t_min}` can equal 1.
    pub bottom_margin: Vec<usize>,
    /// `𝔎(F_top)`.
    pub top_range: Vec<usize>,
    /// `⋂ J′_ℓ` restricted to jets vanishing on `𝔎(F_top)`.
    pub test_space: JetSpace,
    /// Stacked linear conditions of all `J′_ℓ`.
    pub test_constraints: DMatrix<f64>,
}

/// Serializable summary of a covering.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoveringCertificate {
    pub lenses: Vec<LensSummary>,
    pub future_edges: Vec<(usize, usize)>,
    pub reach: Vec<Vec<usize>>,
    pub top_margin: Vec<usize>,
    pub bottom_margin: Vec<usize>,
    pub test_dim: usize,
    pub strongly_causal: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LensSummary {
    pub t_min: f64,
    pub t_max: f64,
    pub w: Vec<usize>,
    pub z: Vec<usize>,
    pub test_dims: (usize, usize, usize),
    pub warnings: Vec<String>,
}

fn sorted_intersects(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|x| b.binary_search(x).is_ok())
}

fn intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter()
        .copied()
        .filter(|x| b.binary_search(x).is_ok())
        .collect()
}

/// Directed edges and BFS reachability sets (paths of length ≥ 1).
pub fn future_graph(lenses: &[LensRegion]) -> (Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let n = lenses.len();
    let mut adj = vec![Vec::new(); n];
    let mut edges = Vec::new();
    for (a, la) in lenses.iter().enumerate() {
        for (b, lb) in lenses.iter().enumerate() {
            if a != b && sorted_intersects(&lb.w, &la.z) {
                adj[a].push(b);
                edges.push((a, b));
            }
        }
    }
    let reach = (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            let mut queue: VecDeque<usize> = adj[s].iter().copied().collect();
            while let Some(x) = queue.pop_front() {
                if seen[x] {
                    continue;
                }
                seen[x] = true;
                queue.extend(adj[x].iter().copied());
            }
            (0..n).filter(|&x| seen[x]).collect()
        })
        .collect();
    (edges, reach)
}

/// First pair `(ℓ, ℓ′)` with `ℓ′` reachable from `ℓ` and overlapping `W`'s.
pub fn strong_causality_violation(
    lenses: &[LensRegion],
    reach: &[Vec<usize>],
) -> Option<(usize, usize)> {
    for (a, r) in reach.iter().enumerate() {
        for &b in r {
            if sorted_intersects(&lenses[a].w, &lenses[b].w) {
                return Some((a, b));
            }
        }
    }
    None
}

pub fn build_covering(ctx: &Context, spec: &CoveringSpec, opts: &LensOptions) -> Result<Covering> {
    let inst = ctx.inst;
    if inst.period(0).is_some() {
        return Err(Error::TimePeriodic);
    }
    if !(spec.stride > 0.0 && spec.height > 0.0 && spec.delta > 0.0) {
        return Err(Error::Config(
            "covering stride, height and delta must be positive".into(),
        ));
    }
    let n = inst.n_points();
    let times: Vec<f64> = (0..n).map(|i| inst.time(i)).collect();
    let tau_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let tau_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let r = inst.kernel.range;
    let pad = spec.pad.unwrap_or(r);
    let first = spec.first_offset.unwrap_or(spec.delta);

    let mut specs = Vec::new();
    loop {
        let t_min = tau_min + first + specs.len() as f64 * spec.stride;
        let t_max = t_min + spec.height;
        let done = match spec.count {
            Some(c) => specs.len() >= c,
            None => t_max > tau_max,
        };
        if done {
            break;
        }
        let region = (0..n)
            .filter(|&i| times[i] >= t_min - spec.delta - pad && times[i] <= t_max + pad)
            .collect();
        specs.push(LensSpec {
            region,
            t_min,
            t_max,
            grid_count: spec.grid_count,
            delta: spec.delta,
            tilt: spec.tilt,
        });
    }
    if specs.is_empty() {
        return Err(Error::Config("slab too short for a single lens".into()));
    }
    let lenses = specs
        .iter()
        .map(|s| LensRegion::build(ctx, s, opts))
        .collect::<Result<Vec<_>>>()?;

    let top_margin: Vec<usize> = (0..n)
        .filter(|&i| times[i] > tau_max - (spec.delta + 1.1 * r))
        .collect();
    let bottom_margin: Vec<usize> = (0..n)
        .filter(|&i| times[i] < tau_min + spec.delta)
        .collect();
    for i in 0..n {
        let covered = lenses.iter().any(|l| l.in_w(i))
            || top_margin.binary_search(&i).is_ok()
            || bottom_margin.binary_search(&i).is_ok();
        if !covered {
            return Err(Error::CoveringGap(i));
        }
    }
    let (future_edges, reach) = future_graph(&lenses);
    if let Some((a, b)) = strong_causality_violation(&lenses, &reach) {
        return Err(Error::StrongCausality(a, b));
    }

    let top_range = inst.compact_range(&top_margin);
    let mut carrier: Vec<usize> = (0..n)
        .filter(|i| top_range.binary_search(i).is_err())
        .collect();
    for l in &lenses {
        carrier = intersection(&carrier, &l.prime_points);
    }
    let rows: usize = lenses.iter().map(|l| l.prime_constraints.nrows()).sum();
    let mut stacked = DMatrix::zeros(rows, inst.n_coeffs());
    let mut at = 0;
    for l in &lenses {
        let k = l.prime_constraints.nrows();
        stacked.rows_mut(at, k).copy_from(&l.prime_constraints);
        at += k;
    }
    let cand = tilted_candidates(inst, &carrier, spec.tilt);
    let test_space = JetSpace::from_candidates(inst.block(), carrier, &cand, Some(&stacked));

    Ok(Covering {
        spec: spec.clone(),
        lenses,
        future_edges,
        reach,
        top_margin,
        bottom_margin,
        top_range,
        test_space,
        test_constraints: stacked,
    })
}

impl Covering {
    pub fn in_top(&self, i: usize) -> bool {
        self.top_margin.binary_search(&i).is_ok()
    }

    pub fn certificate(&self) -> CoveringCertificate {
        CoveringCertificate {
            lenses: self
                .lenses
                .iter()
                .map(|l| LensSummary {
                    t_min: l.spec.t_min,
                    t_max: l.spec.t_max,
                    w: l.w.clone(),
                    z: l.z.clone(),
                    test_dims: (l.j_under.dim(), l.j_bar.dim(), l.j_prime.dim()),
                    warnings: l.warnings.clone(),
                })
                .collect(),
            future_edges: self.future_edges.clone(),
            reach: self.reach.clone(),
            top_margin: self.top_margin.clone(),
            bottom_margin: self.bottom_margin.clone(),
            test_dim: self.test_space.dim(),
            strongly_causal: strong_causality_violation(&self.lenses, &self.reach).is_none(),
        }
    }

    /// Lenses from which `ℓ` is reachable.
    pub fn ancestors(&self, l: usize) -> Vec<usize> {
        (0..self.lenses.len())
            .filter(|&a| self.reach[a].contains(&l))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GluePiece {
    pub lens: usize,
    pub points: Vec<usize>,
    pub norm: f64,
    pub gamma: f64,
    pub identity_residual: f64,
    pub solution_norm: f64,
    pub solution_support: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GlueRound {
    pub residual_norm: f64,
    pub min_time: Option<f64>,
    pub support: Vec<usize>,
    /// Residual points left in `F_top`.
    pub parked: Vec<usize>,
    pub pieces: Vec<GluePiece>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GlueTrace {
    pub rounds: Vec<GlueRound>,
    pub parked_norm: f64,
    pub final_check: f64,
    pub test_dim: usize,
}

impl GlueTrace {
    /// Rounds that solved at least one piece.
    pub fn solve_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| !r.pieces.is_empty()).count()
    }

    /// Minimal residual times strictly increase over rounds that still had
    /// residual outside `F_top`.
    pub fn advancing(&self) -> bool {
        let times: Vec<f64> = self
            .rounds
            .iter()
            .filter(|r| !r.pieces.is_empty())
            .filter_map(|r| r.min_time)
            .collect();
        times.windows(2).all(|w| w[1] > w[0])
    }
}

fn l2_norm(inst: &crate::Instance, v: &JetVector) -> f64 {
    v.coeffs
        .component_mul(&v.coeffs)
        .dot(&coeff_weights(inst))
        .max(0.0)
        .sqrt()
}

/// `max_u |⟨Δu, v⟩ - ⟨u, w⟩|` over the covering test basis, relative to `‖w‖_{L²(M)}`.
pub fn global_weak_residual(ctx: &Context, cov: &Covering, v: &JetVector, w: &JetVector) -> f64 {
    let inst = ctx.inst;
    let g = &ctx.wd * &v.coeffs - w.coeffs.component_mul(&coeff_weights(inst));
    let worst = if cov.test_space.dim() == 0 {
        0.0
    } else {
        cov.test_space.basis.tr_mul(&g).amax()
    };
    let wn = l2_norm(inst, w);
    if wn > 0.0 {
        worst / wn
    } else {
        worst
    }
}

type Step = (usize, Vec<usize>, JetVector, crate::lens::GlueStep);

/// Solves `Δv = w` weakly on `M` by solving in lenses and pushing the commutator
/// terms to later lenses until the residual sits in `F_top`.
pub fn glue_global(
    ctx: &Context,
    cov: &Covering,
    w: &JetVector,
    max_iter: usize,
    tol: f64,
) -> Result<(JetVector, GlueTrace)> {
    let inst = ctx.inst;
    let n = inst.n_points();
    let mut v = JetVector::zeros(inst);
    let mut trace = GlueTrace {
        rounds: Vec::new(),
        parked_norm: 0.0,
        final_check: 0.0,
        test_dim: cov.test_space.dim(),
    };
    let wn = l2_norm(inst, w);
    if wn == 0.0 {
        return Ok((v, trace));
    }
    let scale = (0..n).map(|i| w.point_norm(i)).fold(0.0, f64::max);
    for i in 0..n {
        if w.point_norm(i) > 0.0 && !cov.lenses.iter().any(|l| l.in_w(i)) {
            return Err(Error::NotInW(w.point_norm(i) / scale));
        }
    }

    let mut residual = w.clone();
    loop {
        let nonzero: Vec<usize> = (0..n).filter(|&i| residual.point_norm(i) > 0.0).collect();
        let support: Vec<usize> = nonzero
            .iter()
            .copied()
            .filter(|&i| residual.point_norm(i) > crate::EPS * scale)
            .collect();
        let min_time = support
            .iter()
            .map(|&i| inst.time(i))
            .fold(None, |a: Option<f64>, t| Some(a.map_or(t, |a| a.min(t))));
        let rn = l2_norm(inst, &residual);
        let parked: Vec<usize> = nonzero.iter().copied().filter(|&i| cov.in_top(i)).collect();
        let active: Vec<usize> = nonzero
            .iter()
            .copied()
            .filter(|&i| !cov.in_top(i))
            .collect();
        let mut round = GlueRound {
            residual_norm: rn,
            min_time,
            support,
            parked,
            pieces: Vec::new(),
        };
        if active.is_empty() || rn <= tol * wn {
            trace.parked_norm = rn;
            trace.rounds.push(round);
            break;
        }
        if trace.rounds.len() >= max_iter {
            if let Some((a, b)) = strong_causality_violation(&cov.lenses, &cov.reach) {
                return Err(Error::StrongCausality(a, b));
            }
            return Err(Error::MaxIter {
                iterations: trace.rounds.len(),
                residual: rn / wn,
            });
        }

        // first index wins
        let mut owner: Vec<Vec<usize>> = vec![Vec::new(); cov.lenses.len()];
        for &i in &active {
            match cov.lenses.iter().position(|l| l.in_w(i)) {
                Some(l) => owner[l].push(i),
                None => return Err(Error::CoveringGap(i)),
            }
        }
        let jobs: Vec<(usize, Vec<usize>)> = owner
            .into_iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .collect();
        let steps: Vec<Result<Step>> = jobs
            .into_par_iter()
            .map(|(l, pts)| {
                let mut piece = JetVector::zeros(inst);
                for &i in &pts {
                    piece.at_mut(i).copy_from_slice(residual.at(i));
                }
                let step = glue_step(ctx, &cov.lenses[l], &piece)?;
                Ok((l, pts, piece, step))
            })
            .collect();

        let mut next = JetVector::zeros(inst);
        for &i in &round.parked {
            next.at_mut(i).copy_from_slice(residual.at(i));
        }
        for s in steps {
            let (l, pts, piece, step) = s?;
            v.coeffs += &step.v_out.coeffs;
            next.coeffs -= &step.w_tilde.coeffs;
            round.pieces.push(GluePiece {
                lens: l,
                points: pts,
                norm: l2_norm(inst, &piece),
                gamma: step.gamma,
                identity_residual: step.identity_residual,
                solution_norm: l2_norm(inst, &step.v_out),
                solution_support: step.v_out.support(0.0),
            });
        }
        trace.rounds.push(round);
        residual = next;
    }

    trace.final_check = global_weak_residual(ctx, cov, &v, w);
    if trace.final_check > 1e-6 {
        return Err(Error::WeakIdentity(trace.final_check));
    }
    Ok((v, trace))
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct FinitenessAudit {
    pub count: usize,
    /// `Σ (1 + #ancestors(ℓ))` over lenses whose cutoff region meets `K`: a lens
    /// receives at most one piece per path length from the source lenses.
    pub bound: usize,
}

/// Number of pieces whose solution support meets `k`.
pub fn audit_local_finiteness(cov: &Covering, trace: &GlueTrace, k: &[usize]) -> FinitenessAudit {
    let mut k = k.to_vec();
    k.sort_unstable();
    let count = trace
        .rounds
        .iter()
        .flat_map(|r| &r.pieces)
        .filter(|p| sorted_intersects(&p.solution_support, &k))
        .count();
    let bound = (0..cov.lenses.len())
        .filter(|&l| {
            let lens = &cov.lenses[l];
            k.iter()
                .any(|&i| lens.eta_interval[i] > 0.0 && lens.eta_max[i] > 0.0)
        })
        .map(|l| 1 + cov.ancestors(l).len())
        .sum();
    FinitenessAudit { count, bound }
}
