//! One alternating update of `D` then `H`, with the step family chosen per factor.
//!
//! Each update is written for a factor `V` with `Z_v = V F^T`: the dictionary
//! update uses `V = D, F = H^T` and the code update uses `V = H^T, F = D`, so
//! per-column updates of `V` are per-column updates of `D` and per-row
//! updates of `H`.

use nalgebra::DMatrix;

use crate::error::{DlmError, Result};
use crate::matrix::{Factorization, Observations};
use crate::model::regularizer::{matrix_grad, matrix_value};
use crate::model::{prox_group_l2, prox_nonsmooth, prox_sql1_unchecked, sigma_max_sq, smooth_nu, BoundLoss};
use crate::spec::{Orientation, ProblemSpec, RegularizerSpec};

use super::objective::{spectral_sq, LipschitzMode, Problem, LIPSCHITZ_FLOOR};
use super::SolverConfig;

/// Update rule used for one factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Family {
    /// Full gradient step with a global Lipschitz bound.
    Smooth,
    /// Full gradient step with backtracking (smooth but no global bound).
    Backtrack,
    /// Per-column proximal gradient with per-column Lipschitz bounds.
    BlockProx,
    /// Full gradient step followed by a row-group proximal map.
    Coupled,
    /// Full subgradient step.
    Subgradient,
}

pub(crate) fn family(reg: &RegularizerSpec, weight: f64, subgradient: bool) -> Result<Family> {
    if weight == 0.0 {
        return Ok(Family::Smooth);
    }
    let fam = match reg {
        RegularizerSpec::SquaredL2 | RegularizerSpec::WeightedSquaredL2 { .. } => Family::Smooth,
        RegularizerSpec::ElasticNetSq { nu } | RegularizerSpec::NonNormElasticNet { nu, .. } if *nu == 1.0 => {
            Family::Smooth
        }
        RegularizerSpec::PseudoHuberSq { .. } | RegularizerSpec::SmoothedElasticNetSq { .. } => Family::Backtrack,
        RegularizerSpec::SquaredL1
        | RegularizerSpec::ElasticNetSq { .. }
        | RegularizerSpec::NonNormElasticNet { .. } => Family::BlockProx,
        RegularizerSpec::PartitionedMax { inner, .. } if **inner == RegularizerSpec::SquaredL2 => Family::BlockProx,
        RegularizerSpec::PartitionedMax { .. } => {
            if subgradient {
                return Ok(Family::Subgradient);
            }
            return Err(DlmError::Unsupported(
                "partitioned max has a proximal step only for a squared l2 inner norm".into(),
            ));
        }
        RegularizerSpec::CoupledRowsL1Sq | RegularizerSpec::CoupledRowsL2 => Family::Coupled,
    };
    if subgradient && matches!(fam, Family::BlockProx | Family::Coupled) {
        return Ok(Family::Subgradient);
    }
    Ok(fam)
}

/// One factor of the problem, seen in the `Z_v = V F^T` frame.
pub(crate) struct Side<'a> {
    pub loss: BoundLoss<'a>,
    pub reg: &'a RegularizerSpec,
    pub weight: f64,
    pub unsquared: bool,
    /// `V = H^T`; coupled row penalties then act on columns of `V`.
    pub transposed: bool,
    pub family: Family,
    pub step: Option<f64>,
    /// Curvature of the smooth regularizer part (Smooth family).
    reg_lipschitz: f64,
    /// Last accepted backtracking constant.
    pub l_cache: f64,
}

impl<'a> Side<'a> {
    pub fn new(
        loss: BoundLoss<'a>,
        reg: &'a RegularizerSpec,
        weight: f64,
        unsquared: bool,
        transposed: bool,
        family: Family,
        step: Option<f64>,
    ) -> Self {
        let reg_lipschitz = if weight == 0.0 {
            0.0
        } else {
            match reg {
                RegularizerSpec::WeightedSquaredL2 { lambda } => 2.0 * weight * sigma_max_sq(lambda.as_matrix()),
                _ => 2.0 * weight,
            }
        };
        Self { loss, reg, weight, unsquared, transposed, family, step, reg_lipschitz, l_cache: 0.0 }
    }

    fn coupled(&self) -> bool {
        !self.reg.is_separable()
    }

    pub fn reg_value(&self, v: &DMatrix<f64>) -> f64 {
        if self.transposed && self.coupled() {
            matrix_value(self.reg, &v.transpose(), Orientation::Columns, self.weight, self.unsquared)
        } else {
            matrix_value(self.reg, v, Orientation::Columns, self.weight, self.unsquared)
        }
    }

    pub fn reg_grad(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        if self.transposed && self.coupled() {
            matrix_grad(self.reg, &v.transpose(), Orientation::Columns, self.weight, self.unsquared).transpose()
        } else {
            matrix_grad(self.reg, v, Orientation::Columns, self.weight, self.unsquared)
        }
    }

    fn nu(&self) -> f64 {
        smooth_nu(self.reg)
    }

    /// Updates `v` (and keeps `z = v f^T` consistent).
    pub fn update(&mut self, v: &mut DMatrix<f64>, f: &DMatrix<f64>, z: &mut DMatrix<f64>, cfg: &SolverConfig) {
        match self.family {
            Family::Smooth => self.smooth(v, f, z, cfg),
            Family::Backtrack => self.backtrack(v, f, z, cfg),
            Family::BlockProx => self.block_prox(v, f, z, cfg),
            Family::Coupled => self.coupled_step(v, f, z, cfg),
            Family::Subgradient => {
                let grad = self.loss.gradient(z) * f + self.reg_grad(v);
                let l = self.loss.lipschitz() * spectral_sq(f, cfg.lipschitz_mode) + 2.0 * self.weight;
                let step = self.step.unwrap_or(1.0 / l.max(LIPSCHITZ_FLOOR));
                *v -= grad * step;
                *z = &*v * f.transpose();
            }
        }
    }

    fn smooth(&self, v: &mut DMatrix<f64>, f: &DMatrix<f64>, z: &mut DMatrix<f64>, cfg: &SolverConfig) {
        let grad = self.loss.gradient(z) * f + self.reg_grad(v);
        let step = self.step.unwrap_or_else(|| {
            let l = self.loss.lipschitz() * spectral_sq(f, cfg.lipschitz_mode) + self.reg_lipschitz;
            1.0 / l.max(LIPSCHITZ_FLOOR)
        });
        *v -= grad * step;
        *z = &*v * f.transpose();
    }

    fn backtrack(&mut self, v: &mut DMatrix<f64>, f: &DMatrix<f64>, z: &mut DMatrix<f64>, cfg: &SolverConfig) {
        let grad = self.loss.gradient(z) * f + self.reg_grad(v);
        if let Some(step) = self.step {
            *v -= grad * step;
            *z = &*v * f.transpose();
            return;
        }
        let f0 = self.loss.value(z) + self.reg_value(v);
        let gnorm = grad.norm_squared();
        let base = self.loss.lipschitz() * spectral_sq(f, cfg.lipschitz_mode);
        let mut l = (0.5 * self.l_cache).max(base).max(LIPSCHITZ_FLOOR);
        for _ in 0..100 {
            let cand = &*v - &grad * (1.0 / l);
            let zc = &cand * f.transpose();
            let f1 = self.loss.value(&zc) + self.reg_value(&cand);
            if f1 <= f0 - gnorm / (2.0 * l) + 1e-15 * f0.abs() {
                *v = cand;
                *z = zc;
                self.l_cache = l;
                return;
            }
            l *= 2.0;
        }
    }

    fn block_prox(&self, v: &mut DMatrix<f64>, f: &DMatrix<f64>, z: &mut DMatrix<f64>, cfg: &SolverConfig) {
        let nu = self.nu();
        let w = self.weight;
        let lz = self.loss.lipschitz();
        for i in 0..v.ncols() {
            let fi = f.column(i).into_owned();
            let l = match cfg.lipschitz_mode {
                LipschitzMode::L1Majorant => 2.0 * (lz * fi.lp_norm(1).powi(2) + 2.0 * nu * w),
                _ => lz * fi.norm_squared() + 2.0 * nu * w,
            }
            .max(LIPSCHITZ_FLOOR);
            let step = self.step.unwrap_or(1.0 / l);
            for _ in 0..cfg.inner_prox_iters {
                let gi = self.loss.gradient(z) * &fi;
                let old = v.column(i).into_owned();
                let mut u: Vec<f64> =
                    old.iter().zip(gi.iter()).map(|(x, g)| x - step * (g + 2.0 * nu * w * x)).collect();
                self.prox_column(&mut u, step);
                let mut changed = false;
                for (r, value) in u.iter().enumerate() {
                    let delta = value - old[r];
                    if delta != 0.0 {
                        changed = true;
                        v[(r, i)] = *value;
                        for (c, fc) in fi.iter().enumerate() {
                            z[(r, c)] += delta * fc;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
        }
    }

    fn prox_column(&self, u: &mut [f64], step: f64) {
        prox_nonsmooth(self.reg, u, step * self.weight, self.unsquared);
    }

    fn coupled_step(&self, v: &mut DMatrix<f64>, f: &DMatrix<f64>, z: &mut DMatrix<f64>, cfg: &SolverConfig) {
        let grad = self.loss.gradient(z) * f;
        let step = self
            .step
            .unwrap_or_else(|| 1.0 / (self.loss.lipschitz() * spectral_sq(f, cfg.lipschitz_mode)).max(LIPSCHITZ_FLOOR));
        *v -= grad * step;
        let c = step * self.weight;
        // groups are rows of the original matrix: rows of D, or columns of H^T
        let groups = if self.transposed { v.ncols() } else { v.nrows() };
        for gidx in 0..groups {
            let mut u: Vec<f64> = if self.transposed {
                v.column(gidx).iter().copied().collect()
            } else {
                v.row(gidx).iter().copied().collect()
            };
            match self.reg {
                RegularizerSpec::CoupledRowsL2 => prox_group_l2(&mut u, c),
                RegularizerSpec::CoupledRowsL1Sq => u = prox_sql1_unchecked(&u, c).z,
                _ => unreachable!("not a coupled regularizer"),
            }
            for (j, x) in u.into_iter().enumerate() {
                if self.transposed {
                    v[(j, gidx)] = x;
                } else {
                    v[(gidx, j)] = x;
                }
            }
        }
        *z = &*v * f.transpose();
    }
}

/// Working state of an alternating solve.
pub(crate) struct Alternation<'a> {
    pub d: DMatrix<f64>,
    pub ht: DMatrix<f64>,
    z: DMatrix<f64>,
    zt: DMatrix<f64>,
    side_d: Side<'a>,
    side_h: Side<'a>,
}

impl<'a> Alternation<'a> {
    pub fn new(
        problem: &'a Problem<'a>,
        fact: &Factorization,
        cfg: &SolverConfig,
        families: (Family, Family),
    ) -> Result<Self> {
        let d = fact.d().as_matrix().clone();
        let h = fact.h().as_matrix();
        problem.check(&d, h)?;
        let spec = problem.spec;
        let side_d =
            Side::new(problem.loss(), &spec.reg_d, problem.w_d, spec.unsquared_l1_d, false, families.0, cfg.step_d);
        let side_h =
            Side::new(problem.loss_t(), &spec.reg_h, problem.w_h, spec.unsquared_l1_h, true, families.1, cfg.step_h);
        let z = &d * h;
        Ok(Self { zt: z.transpose(), z, ht: h.transpose(), d, side_d, side_h })
    }

    pub fn families(spec: &ProblemSpec, problem: &Problem<'_>, cfg: &SolverConfig) -> Result<(Family, Family)> {
        Ok((family(&spec.reg_d, problem.w_d, cfg.subgradient)?, family(&spec.reg_h, problem.w_h, cfg.subgradient)?))
    }

    pub fn objective(&self) -> f64 {
        self.side_d.loss.value(&self.z) + self.side_d.reg_value(&self.d) + self.side_h.reg_value(&self.ht)
    }

    fn update_d(&mut self, cfg: &SolverConfig) {
        self.side_d.update(&mut self.d, &self.ht, &mut self.z, cfg);
    }

    fn update_h(&mut self, cfg: &SolverConfig) {
        self.zt = self.z.transpose();
        self.side_h.update(&mut self.ht, &self.d, &mut self.zt, cfg);
        self.z = self.zt.transpose();
    }

    /// One outer iteration: `D` with the current `H`, then `H` with the new `D`.
    pub fn iterate(&mut self, cfg: &SolverConfig) {
        if cfg.exact {
            self.settle(cfg, Self::update_d);
            self.settle(cfg, Self::update_h);
        } else {
            self.update_d(cfg);
            self.update_h(cfg);
        }
    }

    /// Repeats one factor's update until the objective stops changing.
    fn settle(&mut self, cfg: &SolverConfig, update: fn(&mut Self, &SolverConfig)) {
        let mut prev = self.objective();
        for _ in 0..cfg.exact_inner_iters {
            update(self, cfg);
            let obj = self.objective();
            if (prev - obj).abs() <= 1e-12 * prev.abs().max(1.0) {
                break;
            }
            prev = obj;
        }
    }

    pub fn into_factorization(self) -> Result<Factorization> {
        Factorization::from_parts(self.d, self.ht.transpose())
    }
}

fn one_step(
    fact: &Factorization,
    x: &Observations,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    families: (Family, Family),
) -> Result<Factorization> {
    cfg.validate()?;
    let problem = Problem::new(spec, x)?;
    let mut state = Alternation::new(&problem, fact, cfg, families)?;
    state.update_d(cfg);
    state.update_h(cfg);
    state.into_factorization()
}

/// One gradient step on `D` then on `H` (with the new `D`) for smooth regularizers.
///
/// Non-smooth regularizers are accepted only with `cfg.subgradient`.
pub fn step_smooth(
    fact: &Factorization,
    x: &Observations,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<Factorization> {
    let problem = Problem::new(spec, x)?;
    let pick = |reg: &RegularizerSpec, w: f64| -> Result<Family> {
        match family(reg, w, false)? {
            f @ (Family::Smooth | Family::Backtrack) => Ok(f),
            _ if cfg.subgradient => Ok(Family::Subgradient),
            _ => Err(DlmError::Unsupported(format!(
                "{reg:?} is not smooth; enable subgradient mode for a smooth-style step"
            ))),
        }
    };
    let families = (pick(&spec.reg_d, problem.w_d)?, pick(&spec.reg_h, problem.w_h)?);
    one_step(fact, x, spec, cfg, families)
}

fn has_l1_part(reg: &RegularizerSpec) -> bool {
    matches!(reg, RegularizerSpec::SquaredL1 | RegularizerSpec::ElasticNetSq { .. })
}

/// One proximal-gradient sweep for factors whose regularizer has an unsquared l1 part.
pub fn step_prox_l1(
    fact: &Factorization,
    x: &Observations,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<Factorization> {
    let d_l1 = spec.unsquared_l1_d && has_l1_part(&spec.reg_d);
    let h_l1 = spec.unsquared_l1_h && has_l1_part(&spec.reg_h);
    if !(d_l1 || h_l1) {
        return Err(DlmError::Unsupported("no factor uses an unsquared l1 regularizer".into()));
    }
    let problem = Problem::new(spec, x)?;
    let families = Alternation::families(spec, &problem, &SolverConfig { subgradient: false, ..cfg.clone() })?;
    one_step(fact, x, spec, cfg, families)
}

/// One proximal-gradient sweep using the squared-l1 proximal map per column of
/// `D` and per row of `H` for elastic-net (or squared l1) regularizers.
pub fn step_prox_elastic(
    fact: &Factorization,
    x: &Observations,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<Factorization> {
    if !(has_l1_part(&spec.reg_d) || has_l1_part(&spec.reg_h)) {
        return Err(DlmError::Unsupported("no factor uses an elastic-net regularizer".into()));
    }
    let problem = Problem::new(spec, x)?;
    let families = Alternation::families(spec, &problem, &SolverConfig { subgradient: false, ..cfg.clone() })?;
    one_step(fact, x, spec, cfg, families)
}
