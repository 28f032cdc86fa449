//! Batch jobs: a JSON description of a model, a block plan, seeds and tasks,
//! executed into a self-describing JSON report.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::hadamard::{is_generalized_hadamard, is_vw_hadamard};
use crate::kfactory::{
    assemble_k, block_report, numeric_moduli_check, sample_block, verify_k, AssembledK, BlockKind, BlockSpec,
    KBlockPlan,
};
use crate::model::{build_tl_data, sum_rule_residual, tl_check, validate_model, Branch, ModelSpec, TLData};
use crate::numerics::{numeric_rank, CMatrix, Tolerance, C64};
use crate::reflection::{max_component_residual, mu_unchecked, yang_baxter_residual, ybe_residual, MasterBasis};
use crate::sweep::map_seeds;

pub const TOOL_NAME: &str = "tlkit";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Four-site far-commutation checks are skipped above this `n` (the operator
/// has dimension `n⁴`).
const FOUR_SITE_MAX_N: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Validate,
    Tl,
    Ybe,
    Sample,
    Reflect,
    Components,
    Moduli,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Validate,
        Task::Tl,
        Task::Ybe,
        Task::Sample,
        Task::Reflect,
        Task::Components,
        Task::Moduli,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Tl => "tl",
            Task::Ybe => "ybe",
            Task::Sample => "sample",
            Task::Reflect => "reflect",
            Task::Components => "components",
            Task::Moduli => "moduli",
        }
    }

    fn per_seed(self) -> bool {
        matches!(self, Task::Sample | Task::Reflect | Task::Components | Task::Moduli)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VwConfig {
    pub v: Vec<C64>,
    pub w: Vec<C64>,
}

/// Model section of a job. Omitted eigenvalues default to the `n`-th roots of
/// unity and omitted exponents to `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<C64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<i64>>,
    #[serde(default)]
    pub branch: Branch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vw: Option<VwConfig>,
    /// Row-major `n × n` matrix as a flat list of `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<C64>>,
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Config("model.n must be positive".into()));
        }
        let mut spec = ModelSpec::fourier(n).with_branch(self.branch);
        if let Some(l) = &self.lambdas {
            spec.lambdas = l.clone();
        }
        if let Some(e) = &self.exponents {
            spec.exponents = e.clone();
        }
        if let Some(vw) = &self.vw {
            spec = spec.with_vw(vw.v.clone(), vw.w.clone());
        }
        if let Some(h) = &self.h {
            let m = CMatrix::new(n, n, h.clone())
                .map_err(|_| Error::Config(format!("model.h must hold {} entries, got {}", n * n, h.len())))?;
            spec = spec.with_h(m);
        }
        Ok(spec)
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Validate, Task::Tl, Task::Ybe]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<KBlockPlan>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub tolerances: Tolerance,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
}

impl JobConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Static checks that do not require running any task.
    pub fn validate(&self) -> Result<ModelSpec> {
        self.tolerances.validate().map_err(|e| Error::Config(e.to_string()))?;
        let spec = self.model.to_spec()?;
        spec.check(&self.tolerances).map_err(|e| Error::Config(e.to_string()))?;
        if self.tasks.is_empty() {
            return Err(Error::Config("no tasks requested".into()));
        }
        if self.tasks.iter().any(|t| t.per_seed()) {
            let plan = self
                .plan
                .as_ref()
                .ok_or_else(|| Error::Config("tasks sample/reflect/components/moduli need a plan".into()))?;
            plan.validate(spec.n).map_err(|e| Error::Config(e.to_string()))?;
            if self.seeds.is_empty() {
                return Err(Error::Config("seed list is empty".into()));
            }
        }
        Ok(spec)
    }
}

/// Convention notes echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub qprime_branch: Branch,
    pub qprime_equation: String,
    pub r_matrix: String,
    pub mu_normalization: String,
    pub block_scaling: String,
    pub dimension_counting: String,
    pub residuals: String,
}

impl Conventions {
    fn new(branch: Branch) -> Self {
        Conventions {
            qprime_branch: branch,
            qprime_equation: "q'^2 + sqrt(n) q' + 1 = 0, q = sqrt(n) q' nu / n".into(),
            r_matrix:
                "braid form R = q I + T (the permuted form is Pi R); braid and reflection checks use the braid form"
                    .into(),
            mu_normalization: "mu^2 = nu mu with nu = tr(VW) (nu = n without weights); S^-1 mu_r S = nu e_rr".into(),
            block_scaling: "d-class block = ((nu + 2q)/q) d W; default d = q/(nu + 2q)".into(),
            dimension_counting: "moduli reported in complex dimensions (real tangent counts halved)".into(),
            residuals: "relative Frobenius residuals as decimal strings with 17 significant digits".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEcho {
    pub n: usize,
    pub qprime: C64,
    pub q: C64,
    pub loop_weight: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub pass: bool,
    pub metrics: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub conventions: Conventions,
    pub tolerances: Tolerance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelEcho>,
    pub entries: Vec<TaskEntry>,
    pub pass: bool,
}

impl Report {
    /// Copy with every timing field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        for e in &mut r.entries {
            e.wall_ms = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per entry, for terminals.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let seed = e.seed.map(|s| format!(" seed={s}")).unwrap_or_default();
            let status = if e.pass { "PASS" } else { "FAIL" };
            let worst = e
                .metrics
                .get("max_residual")
                .and_then(Value::as_str)
                .map(|r| format!(" max_residual={r}"))
                .unwrap_or_default();
            let err = e.error.as_ref().map(|m| format!(" ({m})")).unwrap_or_default();
            out.push_str(&format!("{status} {}{seed}{worst}{err}\n", e.task.name()));
        }
        out.push_str(if self.pass {
            "overall: PASS\n"
        } else {
            "overall: FAIL\n"
        });
        out
    }
}

/// Full-precision decimal rendering of a residual.
pub fn fmt_residual(x: f64) -> Value {
    Value::String(format!("{x:.16e}"))
}

fn c64_value(z: C64) -> Value {
    json!([z.re, z.im])
}

struct Metrics(BTreeMap<String, Value>);

impl Metrics {
    fn new() -> Self {
        Metrics(BTreeMap::new())
    }

    fn residual(&mut self, key: &str, x: f64) -> &mut Self {
        self.0.insert(key.into(), fmt_residual(x));
        self
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.0.insert(key.into(), v.into());
        self
    }
}

fn timed<F>(task: Task, seed: Option<u64>, f: F) -> TaskEntry
where
    F: FnOnce() -> Result<(bool, Metrics)>,
{
    let start = Instant::now();
    let outcome = f();
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((pass, m)) => TaskEntry {
            task,
            seed,
            pass,
            metrics: m.0,
            error: None,
            wall_ms,
        },
        Err(e) => TaskEntry {
            task,
            seed,
            pass: false,
            metrics: BTreeMap::new(),
            error: Some(e.to_string()),
            wall_ms,
        },
    }
}

fn validate_task(spec: &ModelSpec, tol: &Tolerance) -> Result<(bool, Metrics)> {
    let verdict = validate_model(spec, tol)?;
    let omega = crate::model::build_master_matrix(spec);
    let matrix = match &spec.vw {
        Some(vw) => is_vw_hadamard(&omega, &vw.v, &vw.w, tol)?,
        None => is_generalized_hadamard(&omega, tol)?,
    };
    let mut m = Metrics::new();
    m.put(
        "property",
        serde_json::to_value(verdict.property).expect("serializable"),
    )
    .residual("matrix_residual", matrix.residual)
    .residual("sum_rule_residual", sum_rule_residual(spec)?)
    .residual("max_residual", verdict.residual);
    Ok((verdict.passes, m))
}

fn tl_task(data: &TLData, tol: &Tolerance) -> Result<(bool, Metrics)> {
    let rep = tl_check(data, tol, data.n <= FOUR_SITE_MAX_N)?;
    let mut m = Metrics::new();
    m.residual("idempotent", rep.idempotent)
        .residual("braid_121", rep.braid_121)
        .residual("braid_212", rep.braid_212)
        .put("loop_value", c64_value(data.loop_value()))
        .residual("max_residual", rep.max_residual());
    if let Some(f) = rep.far_commute {
        m.residual("far_commute", f);
    }
    Ok((rep.passes, m))
}

fn ybe_task(data: &TLData, tol: &Tolerance) -> Result<(bool, Metrics)> {
    let braid = ybe_residual(data)?;
    let ybe = yang_baxter_residual(data)?;
    let worst = braid.max(ybe);
    let mut m = Metrics::new();
    m.residual("braid_relation", braid)
        .residual("yang_baxter", ybe)
        .residual("max_residual", worst);
    Ok((worst <= tol.eps_rel, m))
}

fn sample_task(k: &AssembledK, tol: &Tolerance) -> Result<(bool, Metrics)> {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut blocks = Vec::new();
    for sub in &k.blocks {
        let rep = block_report(sub, tol)?;
        let mut ok = rep.quadratic <= tol.eps_rel && rep.max_diagonal <= tol.eps_rel && rep.trace <= tol.eps_rel;
        worst = worst.max(rep.quadratic).max(rep.max_diagonal).max(rep.trace);
        let mut entry = json!({
            "block": sub.kind.label(),
            "quadratic": fmt_residual(rep.quadratic),
            "max_diagonal": fmt_residual(rep.max_diagonal),
            "trace": fmt_residual(rep.trace),
            "rank": rep.rank,
        });
        if let Some(mp) = rep.minimal_polynomial {
            ok &= mp <= tol.eps_rel;
            worst = worst.max(mp);
            entry["minimal_polynomial"] = fmt_residual(mp);
        }
        if let (Some(er), BlockKind::TwoEigen { m_prime, .. }) = (rep.eigen_rank, sub.kind) {
            ok &= er == m_prime;
            entry["eigen_rank"] = json!(er);
        }
        if let BlockKind::Nilpotent { m, .. } = sub.kind {
            ok &= rep.rank == m;
        }
        entry["pass"] = json!(ok);
        pass &= ok;
        blocks.push(entry);
    }
    let mut m = Metrics::new();
    m.put("blocks", blocks)
        .put("d_values", k.d_values.iter().map(|&d| c64_value(d)).collect::<Vec<_>>())
        .put("k_rank", numeric_rank(&k.k_original, tol))
        .residual("max_residual", worst);
    Ok((pass, m))
}

fn reflect_task(data: &TLData, k: &AssembledK, tol: &Tolerance) -> Result<(bool, Metrics)> {
    let v = verify_k(data, k)?;
    let worst = v.reflection.max(v.algebraic);
    let mut m = Metrics::new();
    m.residual("reflection", v.reflection)
        .residual("algebraic", v.algebraic)
        .residual("max_residual", worst);
    Ok((worst <= tol.eps_rel, m))
}

fn components_task(data: &TLData, k: &AssembledK, tol: &Tolerance) -> Result<(bool, Metrics)> {
    let comp = max_component_residual(data, &k.k_master)?;
    let basis = MasterBasis::new(data, tol)?;
    let mut mu_ok = true;
    let mut mu_worst: f64 = 0.0;
    for r in 0..data.n {
        let rep = mu_unchecked(data, r)?.check(data, &basis, tol)?;
        mu_ok &= rep.passes(tol, data.loop_weight);
        let trace_err = (rep.trace - data.loop_weight).norm() / (1.0 + data.loop_weight.norm());
        mu_worst = mu_worst
            .max(rep.square_residual)
            .max(rep.diagonalization_error)
            .max(trace_err);
    }
    let mut m = Metrics::new();
    m.residual("components", comp)
        .residual("mu_projectors", mu_worst)
        .put("mu_rank_one", mu_ok)
        .residual("max_residual", comp.max(mu_worst));
    Ok((comp <= tol.eps_rel && mu_ok, m))
}

/// Numeric moduli counts at freshly drawn generic samples of each block family.
fn moduli_task(plan: &KBlockPlan, seed: u64, tol: &Tolerance) -> Result<(bool, Metrics)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pass = true;
    let mut blocks = Vec::new();
    for spec in plan.classes.iter().flat_map(|c| &c.subblocks) {
        if matches!(spec.kind, BlockKind::Zero { .. }) {
            continue;
        }
        let sub = sample_block(&BlockSpec::generic(spec.kind), &mut rng, tol)?;
        let rep = numeric_moduli_check(&sub, tol)?;
        pass &= rep.passes;
        blocks.push(json!({
            "block": spec.kind.label(),
            "expected_complex": rep.expected_complex,
            "moduli_complex": rep.moduli_complex,
            "tangent_real": rep.tangent_dim,
            "gauge_real": rep.gauge_dim,
            "constraint_rank": rep.constraint_rank,
            "pass": rep.passes,
        }));
    }
    let mut m = Metrics::new();
    m.put("blocks", blocks);
    Ok((pass, m))
}

fn seed_entries(data: &TLData, plan: &KBlockPlan, seed: u64, tasks: &[Task], tol: &Tolerance) -> Vec<TaskEntry> {
    let needs_k = tasks
        .iter()
        .any(|t| matches!(t, Task::Sample | Task::Reflect | Task::Components));
    let start = Instant::now();
    let assembled = if needs_k {
        Some(assemble_k(plan, data, seed, tol))
    } else {
        None
    };
    let assembly_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut entries = Vec::new();
    for &task in tasks.iter().filter(|t| t.per_seed()) {
        let mut entry = match (task, &assembled) {
            (Task::Moduli, _) => timed(task, Some(seed), || moduli_task(plan, seed, tol)),
            (_, Some(Err(e))) => timed(task, Some(seed), || Err(e.clone())),
            (Task::Sample, Some(Ok(k))) => timed(task, Some(seed), || sample_task(k, tol)),
            (Task::Reflect, Some(Ok(k))) => timed(task, Some(seed), || reflect_task(data, k, tol)),
            (Task::Components, Some(Ok(k))) => timed(task, Some(seed), || components_task(data, k, tol)),
            _ => unreachable!("per-seed task without assembly"),
        };
        if task != Task::Moduli && entries.iter().all(|e: &TaskEntry| e.task == Task::Moduli) {
            entry.wall_ms += assembly_ms;
        }
        entries.push(entry);
    }
    entries
}

/// Executes a job. Only configuration problems are returned as errors; task
/// failures are recorded in the report.
pub fn run_job(config: &JobConfig) -> Result<Report> {
    let spec = config.validate()?;
    let tol = config.tolerances;
    let mut tasks = config.tasks.clone();
    tasks.sort();
    tasks.dedup();

    let mut entries = Vec::new();
    if tasks.contains(&Task::Validate) {
        entries.push(timed(Task::Validate, None, || validate_task(&spec, &tol)));
    }
    let data = build_tl_data(&spec, &tol);
    let model = data.as_ref().ok().map(|d| ModelEcho {
        n: d.n,
        qprime: d.qprime,
        q: d.q,
        loop_weight: d.loop_weight,
    });
    let blocked = |task: Task, seed: Option<u64>, e: &Error| TaskEntry {
        task,
        seed,
        pass: false,
        metrics: BTreeMap::new(),
        error: Some(format!("model unusable: {e}")),
        wall_ms: 0.0,
    };
    for task in [Task::Tl, Task::Ybe] {
        if !tasks.contains(&task) {
            continue;
        }
        entries.push(match &data {
            Ok(d) if task == Task::Tl => timed(task, None, || tl_task(d, &tol)),
            Ok(d) => timed(task, None, || ybe_task(d, &tol)),
            Err(e) => blocked(task, None, e),
        });
    }
    let seed_tasks: Vec<Task> = tasks.iter().copied().filter(|t| t.per_seed()).collect();
    if !seed_tasks.is_empty() {
        let plan = config.plan.as_ref().expect("validated");
        let mut per_seed: Vec<TaskEntry> = match &data {
            Ok(d) => map_seeds(&config.seeds, |seed| seed_entries(d, plan, seed, &seed_tasks, &tol))
                .into_iter()
                .flatten()
                .collect(),
            Err(e) => config
                .seeds
                .iter()
                .flat_map(|&s| seed_tasks.iter().map(move |&t| blocked(t, Some(s), e)))
                .collect(),
        };
        per_seed.sort_by_key(|e| (e.task, e.seed));
        entries.extend(per_seed);
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(Report {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        conventions: Conventions::new(spec.branch),
        tolerances: tol,
        model,
        entries,
        pass,
    })
}
