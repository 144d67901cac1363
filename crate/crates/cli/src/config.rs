//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use consensus_lab::dynamics::RecordPlan;
use consensus_lab::graph::{complete_graph, cycle_graph, pair_graph, WeightedDigraph};
use consensus_lab::manet::{scenario_preset, Figure, ManetScene, RadioParams, SpeedProfile};
use consensus_lab::suites::Suite;
use consensus_lab::topology::{cycle_edge_components, parse_trace, A1PrimeParams, TopologyProcess};
use consensus_lab::{GainSchedule, NoiseModel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ProtocolRun,
    MonteCarlo,
    RateStudy,
    AdversarialStudy,
    RandomTopologyStudy,
    ManetStudy,
    VerifySuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ProtocolRun => "protocol_run",
            ExperimentKind::MonteCarlo => "monte_carlo",
            ExperimentKind::RateStudy => "rate_study",
            ExperimentKind::AdversarialStudy => "adversarial_study",
            ExperimentKind::RandomTopologyStudy => "random_topology_study",
            ExperimentKind::ManetStudy => "manet_study",
            ExperimentKind::VerifySuite => "verify_suite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Steps for protocol experiments, rounds for MANET studies.
    pub horizon: usize,
    #[serde(default)]
    pub replicas: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub x1: Option<Vec<f64>>,
    #[serde(default)]
    pub topology: Option<TopologyConfig>,
    #[serde(default)]
    pub gain: Option<GainConfig>,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub record: Option<RecordPlan>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub scene: Option<SceneConfig>,
    #[serde(default)]
    pub suite: SuiteConfig,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Time window `[lo, hi]`; defaults to the last fifth of a decade-aligned range.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    /// Range threshold for the MANET agreement fraction.
    #[serde(default)]
    pub range_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default)]
    pub suites: Option<Vec<Suite>>,
}

fn default_cases() -> usize {
    500
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { cases: default_cases(), suites: None }
    }
}

/// A single graph: a canonical family member, explicit 1-based edges or an
/// edge-list file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Complete { n: usize },
    Pair { n: usize },
    Cycle { n: usize },
    Edges {
        n: usize,
        #[serde(default = "one")]
        a_max: f64,
        #[serde(default)]
        undirected: bool,
        /// `[from, to, weight]` triples.
        edges: Vec<(usize, usize, f64)>,
    },
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    Fixed { graph: GraphConfig },
    Periodic { components: Vec<GraphConfig> },
    /// Periodic process over the single edges of the `n`-cycle.
    CycleEdges { n: usize },
    ExtensibleBlock { components: Vec<GraphConfig>, delta: f64, c: f64 },
    Adversarial { n: usize, delta: f64, #[serde(default = "one")] c: f64 },
    RandomA1prime { n: usize, k: usize, mu: f64, p: f64 },
    IndependentEdges { n: usize, p: f64 },
    TraceFile { path: PathBuf },
}

impl TopologyConfig {
    pub fn delta(&self) -> Option<f64> {
        match self {
            TopologyConfig::ExtensibleBlock { delta, .. } | TopologyConfig::Adversarial { delta, .. } => Some(*delta),
            _ => None,
        }
    }
}

/// A gain schedule, or gains built from the convergence-rate constants
/// with `n` and (by default) `delta` taken from the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainConfig {
    Constant {
        value: f64,
    },
    Power {
        alpha: f64,
        #[serde(default)]
        t_star: u64,
        exponent: f64,
        #[serde(default)]
        shift: f64,
    },
    LogCorrected {
        alpha: f64,
        #[serde(default)]
        t_star: u64,
    },
    Table {
        values: Vec<f64>,
    },
    Theorem1 {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "one")]
        a_max: f64,
        #[serde(default)]
        delta: Option<f64>,
    },
}

/// A preset scene with optional field overrides, or a full scene.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub preset: Option<Figure>,
    #[serde(default)]
    pub positions0: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub headings: Option<Vec<f64>>,
    #[serde(default)]
    pub speed: Option<SpeedProfile>,
    #[serde(default)]
    pub group_velocity: Option<[f64; 2]>,
    #[serde(default)]
    pub radio: Option<RadioParams>,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub initial_states: Option<Vec<f64>>,
    #[serde(default)]
    pub quantization_half_width: Option<f64>,
    #[serde(default)]
    pub reception_std: Option<f64>,
}

/// Global flag overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub replicas: Option<usize>,
    pub horizon: Option<usize>,
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CONSENSUS_LAB_OUT_DIR";

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: toml::Value = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: toml::Value) -> Result<Self, CliError> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.replicas {
            self.replicas = Some(r);
        }
        if let Some(h) = o.horizon {
            self.horizon = h;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = Some(d.clone());
        }
    }

    /// Flag, then config, then the environment, then `out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn replicas_or(&self, default: usize) -> usize {
        self.replicas.unwrap_or(default)
    }

    pub fn record_plan(&self) -> RecordPlan {
        self.record.clone().unwrap_or(if self.horizon <= 2000 {
            RecordPlan::All
        } else {
            RecordPlan::LogSpaced { per_decade: 40 }
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.horizon < 2 {
            return Err(CliError::Config(format!("at `horizon`: must be >= 2 (got {})", self.horizon)));
        }
        if let Some(r) = self.replicas {
            if r < 1 {
                return Err(CliError::Config("at `replicas`: must be >= 1".into()));
            }
        }
        let needs_protocol = !matches!(self.kind, ExperimentKind::ManetStudy | ExperimentKind::VerifySuite);
        if needs_protocol {
            if self.topology.is_none() {
                return Err(CliError::Config(format!("at `topology`: required for {}", self.kind.name())));
            }
            if self.gain.is_none() {
                return Err(CliError::Config(format!("at `gain`: required for {}", self.kind.name())));
            }
        }
        if self.kind == ExperimentKind::ManetStudy && self.scene.is_none() {
            return Err(CliError::Config("at `scene`: required for manet_study".into()));
        }
        if let Some((lo, hi)) = self.fit.window {
            if !(lo > 0.0 && hi > lo) {
                return Err(CliError::Config(format!("at `fit.window`: need 0 < lo < hi (got [{lo}, {hi}])")));
            }
        }
        if let Some(noise) = &self.noise {
            noise.validate().map_err(|e| CliError::Config(format!("at `noise`: {e}")))?;
        }
        Ok(())
    }
}

pub(crate) fn config_err(field: &str) -> impl Fn(consensus_lab::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("at `{field}`: {e}"))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl GraphConfig {
    pub fn build(&self, base: &Path) -> Result<WeightedDigraph, CliError> {
        let err = config_err("topology");
        match self {
            GraphConfig::Complete { n } => complete_graph(*n).map_err(err),
            GraphConfig::Pair { n } => pair_graph(*n).map_err(err),
            GraphConfig::Cycle { n } => cycle_graph(*n).map_err(err),
            GraphConfig::Edges { n, a_max, undirected, edges } => {
                let mut list = Vec::new();
                for &(from, to, w) in edges {
                    if from == 0 || to == 0 {
                        return Err(CliError::Config("at `topology`: node indices are 1-based".into()));
                    }
                    list.push((from - 1, to - 1, w));
                    if *undirected {
                        list.push((to - 1, from - 1, w));
                    }
                }
                WeightedDigraph::from_edges(*n, *a_max, list).map_err(err)
            }
            GraphConfig::File { path } => {
                let p = resolve(base, path);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Config(format!("at `topology`: cannot read {}: {e}", p.display())))?;
                WeightedDigraph::parse_edge_list(&text).map_err(err)
            }
        }
    }
}

impl TopologyConfig {
    pub fn n(&self, base: &Path) -> Result<usize, CliError> {
        Ok(match self {
            TopologyConfig::Fixed { graph } => graph.build(base)?.n(),
            TopologyConfig::Periodic { components } | TopologyConfig::ExtensibleBlock { components, .. } => components
                .first()
                .ok_or_else(|| CliError::Config("at `topology.components`: empty".into()))?
                .build(base)?
                .n(),
            TopologyConfig::CycleEdges { n }
            | TopologyConfig::Adversarial { n, .. }
            | TopologyConfig::RandomA1prime { n, .. }
            | TopologyConfig::IndependentEdges { n, .. } => *n,
            TopologyConfig::TraceFile { .. } => self.build(base, &GainSchedule::constant(0.0), 1, 0)?.n(),
        })
    }

    /// The process for `horizon` steps. Adversarial processes depend on `gains`.
    pub fn build(&self, base: &Path, gains: &GainSchedule, horizon: usize, seed: u64) -> Result<TopologyProcess, CliError> {
        let err = config_err("topology");
        let graphs = |c: &[GraphConfig]| c.iter().map(|g| g.build(base)).collect::<Result<Vec<_>, _>>();
        match self {
            TopologyConfig::Fixed { graph } => Ok(TopologyProcess::fixed(graph.build(base)?)),
            TopologyConfig::Periodic { components } => TopologyProcess::periodic(graphs(components)?).map_err(err),
            TopologyConfig::CycleEdges { n } => {
                TopologyProcess::periodic(cycle_edge_components(*n).map_err(&err)?).map_err(err)
            }
            TopologyConfig::ExtensibleBlock { components, delta, c } => {
                TopologyProcess::extensible_block(graphs(components)?, *delta, *c, horizon).map_err(err)
            }
            TopologyConfig::Adversarial { n, delta, c } => {
                TopologyProcess::adversarial(gains, *delta, *c, *n, horizon).map_err(err)
            }
            TopologyConfig::RandomA1prime { n, k, mu, p } => {
                TopologyProcess::random_a1prime(A1PrimeParams { k: *k, mu: *mu, p: *p }, *n, seed).map_err(err)
            }
            TopologyConfig::IndependentEdges { n, p } => {
                let probs = DMatrix::from_fn(*n, *n, |i, j| if i == j { 0.0 } else { *p });
                TopologyProcess::independent_edges(probs, seed).map_err(err)
            }
            TopologyConfig::TraceFile { path } => {
                let p = resolve(base, path);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Config(format!("at `topology`: cannot read {}: {e}", p.display())))?;
                TopologyProcess::recorded(parse_trace(&text).map_err(&err)?).map_err(err)
            }
        }
    }
}

impl GainConfig {
    pub fn build(&self, n: usize, topology_delta: Option<f64>) -> Result<GainSchedule, CliError> {
        let err = config_err("gain");
        let g = match self {
            GainConfig::Constant { value } => GainSchedule::constant(*value),
            GainConfig::Power { alpha, t_star, exponent, shift } => GainSchedule::Power {
                alpha: *alpha,
                t_star: *t_star,
                exponent: *exponent,
                shift: *shift,
            },
            GainConfig::LogCorrected { alpha, t_star } => GainSchedule::log_corrected(*alpha, *t_star),
            GainConfig::Table { values } => GainSchedule::Table { values: values.clone() },
            GainConfig::Theorem1 { c, a_max, delta } => {
                let delta = delta.or(topology_delta).unwrap_or(0.0);
                consensus_lab::gain::theorem1_gain(n, *c, *a_max, delta).map_err(&err)?
            }
        };
        g.validate().map_err(err)?;
        Ok(g)
    }
}

impl SceneConfig {
    /// The scene and the preset gain, if any.
    pub fn build(&self) -> Result<(ManetScene, Option<GainSchedule>), CliError> {
        let missing = |f: &str| CliError::Config(format!("at `scene.{f}`: required without a preset"));
        let (base, gain) = match self.preset {
            Some(f) => {
                let (s, g) = scenario_preset(f);
                (Some(s), Some(g))
            }
            None => (None, None),
        };
        macro_rules! pick {
            ($f:ident) => {
                match (&self.$f, &base) {
                    (Some(v), _) => v.clone(),
                    (None, Some(b)) => b.$f.clone(),
                    (None, None) => return Err(missing(stringify!($f))),
                }
            };
        }
        let scene = ManetScene {
            positions0: pick!(positions0),
            headings: pick!(headings),
            speed: pick!(speed),
            group_velocity: self.group_velocity.or(base.as_ref().map(|b| b.group_velocity)).unwrap_or([0.0, 0.0]),
            radio: pick!(radio),
            period: pick!(period),
            initial_states: pick!(initial_states),
            quantization_half_width: pick!(quantization_half_width),
            reception_std: pick!(reception_std),
        };
        scene.validate().map_err(config_err("scene"))?;
        Ok((scene, gain))
    }
}
