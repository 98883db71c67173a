//! Observables on the extension of the form `u(x, ℓ) = w(ℓ) · g_ℓ(x)`, where
//! `w` is a summable cell-weight profile and each `g_ℓ` is a cylinder
//! function of the itinerary. For this class the mixing-rate hypotheses can
//! be certified rather than sampled.

mod cylinder;
mod metric;
mod profile;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use cylinder::{CylinderFunction, CylinderSpec, SymbolKey, TableEntry};
pub use metric::{
    continuity_modulus, d_theta, lipschitz_estimate, separation_time, LipschitzReport, LocalFunction, ModulusReport,
    SeparationParams,
};
pub use profile::{geometric_lattice_sum, geometric_lattice_tail, CellWeight, CellWeightProfile, WeightSum};

use crate::error::{Error, Result};
use crate::extension::{ExtensionSystem, TrajectoryRecord};
use crate::lattice::{Cell, Symbol};
use crate::stats::{run_ensemble, EstimateWithCI, Outcome};

/// The local factor `g_ℓ` of an observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalSpec {
    Constant { value: f64 },
    /// `1` on collisions with scatterer (Markov state) `site`.
    SiteIndicator { site: u32 },
    Table(CylinderSpec),
}

impl LocalSpec {
    fn one() -> Self {
        LocalSpec::Constant { value: 1.0 }
    }

    pub fn build(&self) -> Result<CylinderFunction> {
        match self {
            LocalSpec::Constant { value } if value.is_finite() => Ok(CylinderFunction::constant(*value)),
            LocalSpec::Constant { .. } => Err(Error::InvalidArgument("constant local must be finite".into())),
            LocalSpec::SiteIndicator { site } => Ok(CylinderFunction::site_indicator(*site)),
            LocalSpec::Table(spec) => CylinderFunction::try_from(spec.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerCellLocal {
    pub cell: Cell,
    pub local: LocalSpec,
}

fn default_p() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub profile: CellWeightProfile,
    /// Local factor shared by every cell not listed in `per_cell`.
    #[serde(default = "LocalSpec::one")]
    pub local: LocalSpec,
    /// Cell-specific locals; only with a finite profile.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_cell: Vec<PerCellLocal>,
    #[serde(default = "default_p")]
    pub p: f64,
}

impl ObservableSpec {
    pub fn new(profile: CellWeightProfile, local: LocalSpec) -> Self {
        ObservableSpec {
            profile,
            local,
            per_cell: Vec::new(),
            p: default_p(),
        }
    }

    /// `1_{C_0}`: weight 1 on the zero cell, constant local.
    pub fn indicator_cell() -> Self {
        Self::new(CellWeightProfile::single(Cell::ZERO, 1.0), LocalSpec::one())
    }

    /// `w(ℓ)` times the constant 1.
    pub fn constant(profile: CellWeightProfile) -> Self {
        Self::new(profile, LocalSpec::one())
    }

    fn locals(&self) -> Result<(CylinderFunction, BTreeMap<Cell, CylinderFunction>)> {
        self.profile.validate()?;
        if !(self.p > 1.0) {
            return Err(Error::InvalidArgument(format!("p must exceed 1, got {}", self.p)));
        }
        let shared = self.local.build()?;
        let mut per_cell = BTreeMap::new();
        if !self.per_cell.is_empty() && !matches!(self.profile, CellWeightProfile::Finite { .. }) {
            return Err(Error::InvalidArgument("per-cell locals need a finite profile".into()));
        }
        for pc in &self.per_cell {
            if per_cell.insert(pc.cell, pc.local.build()?).is_some() {
                return Err(Error::InvalidArgument(format!("two locals for cell {}", pc.cell)));
            }
        }
        Ok((shared, per_cell))
    }
}

/// Certified sums over the lattice of local norms, for one observable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Norms {
    pub p: f64,
    pub depth: usize,
    pub weight_sum: WeightSum,
    /// `sup_ℓ ‖g_ℓ‖_∞`.
    pub sup_local: f64,
    /// `Σ_ℓ ‖u_ℓ‖_∞`; also bounds `Σ_ℓ ‖u_ℓ‖_p` since μ̄ is a probability.
    pub sup_sum: f64,
    /// `Σ_ℓ |w(ℓ)| · osc(g_ℓ)` over non-constant locals, bounding every
    /// modulus sum below the depth.
    pub oscillation_sum: f64,
    /// `max_ℓ L_ϑ(g_ℓ)` upper bound at ϑ = 1/2.
    pub lipschitz_upper: f64,
}

fn norms_of(spec: &ObservableSpec) -> Result<Norms> {
    let (shared, per_cell) = spec.locals()?;
    let weight_sum = spec.profile.abs_sum();
    let weighted = |f: &dyn Fn(&CylinderFunction) -> f64| -> f64 {
        if per_cell.is_empty() {
            let v = f(&shared);
            return if v == 0.0 { 0.0 } else { v * weight_sum.upper };
        }
        spec.profile
            .support(usize::MAX >> 1)
            .iter()
            .map(|(c, w)| w.abs() * f(per_cell.get(c).unwrap_or(&shared)))
            .sum()
    };
    let all = || std::iter::once(&shared).chain(per_cell.values());
    Ok(Norms {
        p: spec.p,
        depth: all().map(|g| g.depth()).max().unwrap_or(0),
        weight_sum,
        sup_local: all().map(|g| g.sup_norm()).fold(0.0, f64::max),
        sup_sum: weighted(&|g| g.sup_norm()),
        oscillation_sum: weighted(&|g| if g.is_constant() { 0.0 } else { g.oscillation() }),
        lipschitz_upper: all().map(|g| g.lipschitz_upper(0.5)).fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisLine {
    pub pass: bool,
    /// The certified sum (∞ when it diverges).
    pub bound: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub p: f64,
    pub u: Norms,
    pub v: Norms,
    /// `Σ_ℓ (‖u_ℓ‖_∞ + ‖v_ℓ‖_p) < ∞`.
    pub hyp1: HypothesisLine,
    /// `∀k ≥ 1, Σ_ℓ ‖ω_{-k}^∞(v_ℓ)‖_p < ∞`.
    pub hyp1bis: HypothesisLine,
    /// `Σ_ℓ (‖ω_{-k}^k(u_ℓ)‖_1 + ‖ω_{-k}^∞(v_ℓ)‖_1) → 0`.
    pub hyp2: HypothesisLine,
    /// The modulus sums of HYP2 are exactly 0 from this k on.
    pub vanishing_from: usize,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.hyp1.pass && self.hyp1bis.pass && self.hyp2.pass
    }

    pub fn into_result(self) -> Result<Self> {
        for (name, line) in [("HYP1", &self.hyp1), ("HYP1bis", &self.hyp1bis), ("HYP2", &self.hyp2)] {
            if !line.pass {
                return Err(Error::HypothesisFailed {
                    hypothesis: name,
                    detail: line.detail.clone(),
                });
            }
        }
        Ok(self)
    }
}

fn describe(which: &str, norms: &Norms) -> String {
    format!(
        "sum over cells of |w| for {which} is {} ({})",
        norms.weight_sum.value, norms.weight_sum.method
    )
}

/// Certifies the mixing-rate hypotheses for the pair `(u, v)`. Sup norms are
/// used as bounds for the p-norms, and moduli of depth-k cylinder locals
/// vanish for windows of half-width ≥ k.
pub fn hypothesis_check(u: &ObservableSpec, v: &ObservableSpec) -> Result<HypothesisReport> {
    let nu = norms_of(u)?;
    let nv = norms_of(v)?;
    let p = v.p;

    let hyp1_bound = nu.sup_sum + nv.sup_sum;
    let hyp1 = HypothesisLine {
        pass: hyp1_bound.is_finite(),
        bound: hyp1_bound,
        detail: if !nu.sup_sum.is_finite() {
            format!("u: {}", describe("u", &nu))
        } else if !nv.sup_sum.is_finite() {
            format!("v: {}", describe("v", &nv))
        } else {
            format!("sum ||u_l||_inf = {}, sum ||v_l||_p <= {}", nu.sup_sum, nv.sup_sum)
        },
    };

    // At k = 1 the modulus is at most the oscillation, and it is 0 once the
    // window covers the local's depth.
    let bis = if nv.depth > 1 { nv.oscillation_sum } else { 0.0 };
    let hyp1bis = HypothesisLine {
        pass: bis.is_finite(),
        bound: bis,
        detail: if bis.is_finite() {
            format!("sum ||omega_-1^inf(v_l)||_p <= {bis}, 0 for k >= {}", nv.depth)
        } else {
            format!("v: {}", describe("v", &nv))
        },
    };

    let at_zero = nu.oscillation_sum + nv.oscillation_sum;
    let vanishing_from = nu.depth.max(nv.depth);
    let hyp2 = HypothesisLine {
        pass: at_zero.is_finite(),
        bound: if at_zero.is_finite() { 0.0 } else { f64::INFINITY },
        detail: if at_zero.is_finite() {
            format!("modulus sums <= {at_zero} and vanish exactly for k >= {vanishing_from}")
        } else {
            "modulus sums are not summable over cells".into()
        },
    };

    Ok(HypothesisReport {
        p,
        u: nu,
        v: nv,
        hyp1,
        hyp1bis,
        hyp2,
        vanishing_from,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableOptions {
    /// Samples for the Monte Carlo integral and p-norm.
    pub n_integral: usize,
    pub seed: u64,
    /// Relative tail mass dropped when summing over cells.
    pub trunc_tol: f64,
}

impl Default for ObservableOptions {
    fn default() -> Self {
        ObservableOptions {
            n_integral: 100_000,
            seed: 0,
            trunc_tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Truncation {
    pub radius: usize,
    /// `Σ_{‖ℓ‖₁ > radius} |w(ℓ)|`.
    pub tail: f64,
}

/// An observable with cached norms and integral. Immutable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observable {
    spec: ObservableSpec,
    #[serde(skip)]
    shared: CylinderFunction,
    #[serde(skip)]
    per_cell: BTreeMap<Cell, CylinderFunction>,
    norms: Norms,
    /// `∫ u dμ = Σ_ℓ w(ℓ) ∫ g_ℓ dμ̄`.
    integral: EstimateWithCI,
    /// `‖g‖_p` of the shared local under μ̄.
    p_norm: EstimateWithCI,
    truncation: Truncation,
}

impl Observable {
    pub fn spec(&self) -> &ObservableSpec {
        &self.spec
    }

    pub fn profile(&self) -> &CellWeightProfile {
        &self.spec.profile
    }

    pub fn norms(&self) -> &Norms {
        &self.norms
    }

    pub fn integral(&self) -> EstimateWithCI {
        self.integral
    }

    pub fn p_norm(&self) -> EstimateWithCI {
        self.p_norm
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn depth(&self) -> usize {
        self.norms.depth
    }

    pub fn shared_local(&self) -> &CylinderFunction {
        &self.shared
    }

    /// All locals share one function, so `u = w ⊗ g`.
    pub fn is_factorized(&self) -> bool {
        self.per_cell.is_empty()
    }

    pub fn local(&self, cell: Cell) -> &CylinderFunction {
        self.per_cell.get(&cell).unwrap_or(&self.shared)
    }

    pub fn weight(&self, cell: Cell) -> f64 {
        self.spec.profile.weight(cell)
    }

    /// `u(x, ℓ)` from the itinerary window of `x` (half-width ≥ depth).
    pub fn eval(&self, cell: Cell, window: &[Symbol]) -> f64 {
        let w = self.weight(cell);
        if w == 0.0 {
            return 0.0;
        }
        w * self.local(cell).eval(window)
    }

    /// Cells inside the truncation radius with their weights.
    pub fn support(&self) -> Vec<(Cell, f64)> {
        self.spec.profile.support(self.truncation.radius)
    }
}

/// Assembles an observable: certifies summability, then caches norms and a
/// Monte Carlo estimate of `∫ u dμ` (exact when every local is constant).
pub fn make_observable<S: ExtensionSystem>(
    system: &S,
    spec: &ObservableSpec,
    opts: &ObservableOptions,
) -> Result<Observable> {
    let (shared, per_cell) = spec.locals()?;
    let norms = norms_of(spec)?;
    if !norms.sup_sum.is_finite() {
        return Err(Error::HypothesisFailed {
            hypothesis: "HYP1",
            detail: describe("this observable", &norms),
        });
    }
    let radius = spec.profile.truncation_radius(opts.trunc_tol)?;
    let truncation = Truncation {
        radius,
        tail: spec.profile.abs_tail(radius),
    };

    // Coefficient of each distinct local in ∫u = Σ_ℓ w(ℓ) ∫g_ℓ.
    let locals: Vec<&CylinderFunction> = std::iter::once(&shared).chain(per_cell.values()).collect();
    let (signed, signed_err) = spec.profile.signed_sum();
    let mut coef = vec![signed];
    for cell in per_cell.keys() {
        let w = spec.profile.weight(*cell);
        coef[0] -= w;
        coef.push(w);
    }

    let p = spec.p;
    let (integral, p_norm) = if locals.iter().all(|g| g.is_constant()) {
        let value: f64 = locals.iter().zip(&coef).map(|(g, c)| c * g.default_value()).sum();
        let err = signed_err * shared.sup_norm();
        (EstimateWithCI::new(value, err, 0), EstimateWithCI::exact(shared.default_value().abs()))
    } else {
        let depth = norms.depth;
        let m = locals.len();
        let summary = run_ensemble(
            opts.n_integral,
            opts.seed,
            m + 1,
            TrajectoryRecord::new,
            |rec, s| {
                let x0 = system.sample(s.rng);
                rec.fill(system, x0, 2 * depth + 1)?;
                s.grazing = rec.grazing_count > 0;
                if s.grazing && depth > 0 {
                    return Ok(Outcome::Excluded);
                }
                let window = &rec.symbols[..=2 * depth];
                for (i, g) in locals.iter().enumerate() {
                    s.out[i] = g.eval(window);
                }
                s.out[m] = s.out[0].abs().powf(p);
                Ok(Outcome::Included)
            },
        )?;
        let mut coeffs = coef.clone();
        coeffs.push(0.0);
        let mut integral = summary.linear(&coeffs);
        integral.stderr = (integral.stderr.powi(2) + (signed_err * shared.sup_norm()).powi(2)).sqrt();
        integral.censored = Some(summary.excluded());
        let moment = summary.estimate(m);
        let norm = moment.value.powf(1.0 / p);
        let se = if moment.value > 0.0 { moment.stderr * norm / (p * moment.value) } else { 0.0 };
        (integral, EstimateWithCI::new(norm, se, moment.n_samples))
    };

    Ok(Observable {
        spec: spec.clone(),
        shared,
        per_cell,
        norms,
        integral,
        p_norm,
        truncation,
    })
}

/// The proof's envelopes `u^(k,±)`: every local replaced by its inf (`upper
/// = false`) or sup over the depth-k itinerary atoms. Locals of depth ≤ k
/// are unchanged, so `u^(k,-) ≤ u ≤ u^(k,+)`.
pub fn envelope<S: ExtensionSystem>(
    system: &S,
    u: &Observable,
    k: usize,
    upper: bool,
    opts: &ObservableOptions,
) -> Result<Observable> {
    if u.depth() <= k {
        return Ok(u.clone());
    }
    let coarse = |g: &CylinderFunction| LocalSpec::Table(g.coarsen(k, upper).spec());
    let spec = ObservableSpec {
        profile: u.spec.profile.clone(),
        local: coarse(&u.shared),
        per_cell: u
            .per_cell
            .iter()
            .map(|(c, g)| PerCellLocal { cell: *c, local: coarse(g) })
            .collect(),
        p: u.spec.p,
    };
    make_observable(system, &spec, opts)
}
