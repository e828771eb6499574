//! Scenario files: TOML with lengths in cm, frequencies in GHz and angles in
//! degrees. Leads and vertices are numbered from 1 as in lab notebooks;
//! everything is converted to 0-based SI values on load.
//!
//! ```toml
//! name = "two_port"
//! seed = 1
//!
//! [network]
//! frequency_ghz = 2.1
//! index = [1.0, 0.0085]
//! vertices = 2
//! bonds = [[1, 2, 27.0]]
//! leads = [1, 2]
//!
//! [wavefront]
//! leads = [{ lead = 1, amplitude = 1.0, phase_deg = 0.0 }]
//!
//! [objective]
//! kind = "tmt"
//! injected = [1]
//! targeted = [2]
//!
//! [tunables]
//! bonds = "all"
//! bond_spread_cm = 5.0
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::adjoint::{Actuation, ParamKind, Parameter, ParameterVector, Twin};
use crate::error::{Error, Result};
use crate::graph::{Bond, LineInsert, MetricGraph};
use crate::instrument::{shifter, MeasurementPlan, NoiseModel, Plant};
use crate::objective::ObjectiveSpec;
use crate::optim::{Method, Optimizer, OptimizerConfig, RunOutcome};
use crate::wave::Wavefront;

pub const AMPLITUDE_BOUNDS: (f64, f64) = (0.001, 3.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    DigitalTwin,
    InstrumentSim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub network: Spanned<NetworkConfig>,
    #[serde(default)]
    pub wavefront: Option<Spanned<WavefrontConfig>>,
    pub objective: Spanned<ObjectiveConfig>,
    pub tunables: Spanned<TunablesConfig>,
    #[serde(default)]
    pub optimizer: Option<Spanned<OptimizerSection>>,
    #[serde(default)]
    pub instrument: Option<Spanned<InstrumentSection>>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub frequency_ghz: f64,
    /// Complex refractive index of the cables as `[re, im]`.
    pub index: [f64; 2],
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub vertices: Option<usize>,
    /// `[n, m, length_cm]` with 1-based vertices.
    #[serde(default)]
    pub bonds: Option<Vec<(usize, usize, f64)>>,
    /// Vertices carrying leads, in lead order. Defaults to every vertex.
    #[serde(default)]
    pub leads: Option<Vec<usize>>,
    #[serde(default)]
    pub shifter: Option<ShifterConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorConfig {
    FullyConnected {
        vertices: usize,
        mean_cm: f64,
        spread_cm: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShifterConfig {
    pub bond: (usize, usize),
    /// Initial motor position in microsteps.
    pub steps: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavefrontConfig {
    /// Draw amplitudes and phases uniformly within bounds for these leads.
    #[serde(default)]
    pub random: Option<Vec<usize>>,
    #[serde(default)]
    pub leads: Vec<LeadInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadInput {
    pub lead: usize,
    pub amplitude: f64,
    #[serde(default)]
    pub phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum ObjectiveConfig {
    Tmt {
        injected: Vec<usize>,
        targeted: Vec<usize>,
    },
    Cpa {
        /// Defaults to every lead.
        #[serde(default)]
        injected: Option<Vec<usize>>,
    },
    Invis {
        interrogation: usize,
        probe: usize,
        control: usize,
        #[serde(default = "yes")]
        control_penalty: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BondSelection {
    /// Only the literal string `"all"` is accepted.
    All(String),
    Listed(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunablesConfig {
    #[serde(default)]
    pub bonds: Option<BondSelection>,
    /// Half-width of the bond-length box around each initial length. For
    /// generated networks the box is centred on the generator mean instead.
    #[serde(default)]
    pub bond_spread_cm: Option<f64>,
    #[serde(default)]
    pub amplitudes: Vec<usize>,
    #[serde(default)]
    pub phases: Vec<usize>,
    #[serde(default)]
    pub shifter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub gradient_tolerance: Option<f64>,
    #[serde(default)]
    pub initial_step: Option<f64>,
    #[serde(default)]
    pub max_step: Option<f64>,
    /// Objective value a run must reach to count as a success.
    #[serde(default)]
    pub target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSection {
    #[serde(default = "ten")]
    pub repeats: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "yes")]
    pub quantize_shifter: bool,
}

fn ten() -> usize {
    10
}

impl Default for InstrumentSection {
    fn default() -> Self {
        InstrumentSection {
            repeats: 10,
            noise_sigma: 0.0,
            quantize_shifter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
}

/// A validated scenario in SI units with 0-based indices.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub frequency: f64,
    pub graph: MetricGraph,
    pub wavefront: Wavefront,
    pub objective: ObjectiveSpec,
    pub params: ParameterVector,
    pub optimizer: OptimizerConfig,
    pub target: Option<f64>,
    pub instrument: InstrumentSection,
    pub output: OutputSection,
    /// Hex sha256 of the canonical configuration and seed.
    pub hash: String,
    config: ScenarioConfig,
    source: String,
}

struct Located<'a> {
    text: &'a str,
}

impl Located<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err<T>(&self, span: std::ops::Range<usize>, msg: impl std::fmt::Display) -> Result<T> {
        Err(Error::Scenario(format!("line {}: {msg}", self.line(span.start))))
    }
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let at = e
            .span()
            .map(|s| format!("line {}: ", Located { text }.line(s.start)))
            .unwrap_or_default();
        Error::Scenario(format!("{at}{}", e.message()))
    })?;
    build(config, None, text)
}

/// Reads and parses a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

impl Scenario {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// The same scenario with a different seed; random graph and wavefront
    /// draws change accordingly.
    pub fn with_seed(&self, seed: u64) -> Result<Scenario> {
        build(self.config.clone(), Some(seed), &self.source)
    }

    pub fn twin(&self) -> Result<Twin> {
        let quantize = self.mode == Mode::InstrumentSim && self.instrument.quantize_shifter;
        Ok(Twin::new(
            self.graph.clone(),
            self.wavefront.clone(),
            self.objective.clone(),
            self.params.clone(),
            self.frequency,
        )?
        .with_actuation(Actuation {
            quantize_shifter: quantize,
        }))
    }

    pub fn plant(&self) -> Result<Plant> {
        let twin = self.twin()?;
        let plan = MeasurementPlan::for_twin(&twin, self.instrument.repeats)?;
        let noise = NoiseModel::new(self.instrument.noise_sigma, self.seed)?;
        Plant::new(twin, plan, noise)
    }

    /// Runs the optimizer on the twin, or on the emulated plant in
    /// instrument mode.
    pub fn run(&self) -> Result<RunOutcome> {
        let optimizer = Optimizer::new(self.optimizer.clone())?;
        let x0 = self.params.values();
        match self.mode {
            Mode::DigitalTwin => optimizer.run(&mut self.twin()?, &x0),
            Mode::InstrumentSim => optimizer.run(&mut self.plant()?, &x0),
        }
    }

    /// Whether a finished run met the configured target, if any.
    pub fn target_met(&self, value: f64) -> bool {
        match self.target {
            None => true,
            Some(t) => self.optimizer.sense.improves(value, t),
        }
    }
}

fn build(mut config: ScenarioConfig, seed: Option<u64>, text: &str) -> Result<Scenario> {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let loc = Located { text };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let net_span = config.network.span();
    let net = config.network.get_ref();
    if !(net.frequency_ghz > 0.0) {
        return loc.err(net_span, "frequency_ghz must be positive");
    }
    let frequency = net.frequency_ghz * 1e9;
    let index = Complex64::new(net.index[0], net.index[1]);
    if !(index.re > 0.0 && index.im >= 0.0) {
        return loc.err(
            net_span,
            "index must have positive real part and non-negative imaginary part",
        );
    }

    let (vertex_count, mut bonds, generated) = match (&net.generator, &net.bonds) {
        (Some(_), Some(_)) => return loc.err(net_span, "give either a generator or an explicit bond list, not both"),
        (None, None) => return loc.err(net_span, "network needs a generator or a bond list"),
        (
            Some(GeneratorConfig::FullyConnected {
                vertices,
                mean_cm,
                spread_cm,
            }),
            None,
        ) => {
            if *vertices < 2 || !(*mean_cm > *spread_cm && *spread_cm >= 0.0) {
                return loc.err(
                    net_span,
                    "fully-connected generator needs >= 2 vertices and 0 <= spread < mean",
                );
            }
            let g = MetricGraph::fully_connected(*vertices, mean_cm / 100.0, spread_cm / 100.0, index, &mut rng)?;
            (
                *vertices,
                g.bonds().to_vec(),
                Some((mean_cm / 100.0, spread_cm / 100.0)),
            )
        }
        (None, Some(list)) => {
            let Some(v) = net.vertices else {
                return loc.err(net_span, "explicit bond list needs `vertices`");
            };
            let mut bonds = Vec::with_capacity(list.len());
            for &(n, m, len) in list {
                if n == 0 || m == 0 || n > v || m > v {
                    return loc.err(net_span, format!("bond ({n}, {m}) references a vertex outside 1..={v}"));
                }
                bonds.push(Bond::new(n - 1, m - 1, len / 100.0));
            }
            (v, bonds, None)
        }
    };
    let lead_vertices: Vec<usize> = match &net.leads {
        None => (0..vertex_count).collect(),
        Some(list) => {
            let mut out = Vec::with_capacity(list.len());
            for &v in list {
                if v == 0 || v > vertex_count {
                    return loc.err(net_span, format!("lead vertex {v} outside 1..={vertex_count}"));
                }
                out.push(v - 1);
            }
            out
        }
    };
    let mut shifter_bond = None;
    if let Some(sh) = &net.shifter {
        let (n, m) = sh.bond;
        let (a, b) = (
            n.wrapping_sub(1).min(m.wrapping_sub(1)),
            n.wrapping_sub(1).max(m.wrapping_sub(1)),
        );
        let Some(id) = bonds.iter().position(|bd| bd.n == a && bd.m == b) else {
            return loc.err(net_span, format!("shifter bond ({n}, {m}) is not in the network"));
        };
        let length = shifter::shifter_length(sh.steps).or_else(|e| loc.err(net_span.clone(), e))?;
        bonds[id] = bonds[id].clone().with_insert(LineInsert {
            length,
            index: shifter::SHIFTER_INDEX,
        });
        shifter_bond = Some((id, sh.steps));
    }
    let graph =
        MetricGraph::new(vertex_count, bonds, lead_vertices, index).or_else(|e| loc.err(net_span.clone(), e))?;
    let lead_count = graph.lead_count();
    let lead = |alpha: usize, span: std::ops::Range<usize>, what: &str| -> Result<usize> {
        if alpha == 0 || alpha > lead_count {
            return loc.err(span, format!("{what} lead {alpha} outside 1..={lead_count}"));
        }
        Ok(alpha - 1)
    };

    let obj_span = config.objective.span();
    let objective = match config.objective.get_ref() {
        ObjectiveConfig::Tmt { injected, targeted } => ObjectiveSpec::Tmt {
            injected: injected
                .iter()
                .map(|&a| lead(a, obj_span.clone(), "injected"))
                .collect::<Result<_>>()?,
            targeted: targeted
                .iter()
                .map(|&a| lead(a, obj_span.clone(), "targeted"))
                .collect::<Result<_>>()?,
        },
        ObjectiveConfig::Cpa { injected } => ObjectiveSpec::Cpa {
            injected: match injected {
                None => (0..lead_count).collect(),
                Some(list) => list
                    .iter()
                    .map(|&a| lead(a, obj_span.clone(), "injected"))
                    .collect::<Result<_>>()?,
            },
        },
        ObjectiveConfig::Invis {
            interrogation,
            probe,
            control,
            control_penalty,
        } => ObjectiveSpec::Invis {
            interrogation: lead(*interrogation, obj_span.clone(), "interrogation")?,
            probe: lead(*probe, obj_span.clone(), "probe")?,
            control: lead(*control, obj_span.clone(), "control")?,
            control_penalty: *control_penalty,
        },
    };

    let mut amplitudes = vec![0.0; lead_count];
    let mut phases = vec![0.0; lead_count];
    if let Some(wf) = &config.wavefront {
        let span = wf.span();
        let wf = wf.get_ref();
        if let Some(random) = &wf.random {
            for &a in random {
                let l = lead(a, span.clone(), "random wavefront")?;
                amplitudes[l] = rng.random_range(AMPLITUDE_BOUNDS.0..=AMPLITUDE_BOUNDS.1);
                phases[l] = rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI);
            }
        }
        for input in &wf.leads {
            let l = lead(input.lead, span.clone(), "wavefront")?;
            amplitudes[l] = input.amplitude;
            phases[l] = input.phase_deg.to_radians();
        }
    }
    let wavefront = Wavefront::new(amplitudes, phases).or_else(|e| {
        let span = config.wavefront.as_ref().map(|w| w.span()).unwrap_or(0..0);
        loc.err(span, e)
    })?;
    if let Err(e) =
        crate::objective::Objective::new(objective.clone(), &graph).and_then(|o| o.check_wavefront(&wavefront))
    {
        return loc.err(obj_span, e);
    }

    let tun_span = config.tunables.span();
    let tun = config.tunables.get_ref();
    let mut entries = Vec::new();
    let bond_ids: Vec<usize> = match &tun.bonds {
        None => Vec::new(),
        Some(BondSelection::All(s)) if s == "all" => (0..graph.bonds().len()).collect(),
        Some(BondSelection::All(s)) => {
            return loc.err(tun_span, format!("bonds must be \"all\" or a list of pairs, got {s:?}"))
        }
        Some(BondSelection::Listed(pairs)) => {
            let mut ids = Vec::with_capacity(pairs.len());
            for &(n, m) in pairs {
                let id = (n > 0 && m > 0).then(|| graph.bond_between(n - 1, m - 1)).flatten();
                match id {
                    Some(id) => ids.push(id),
                    None => return loc.err(tun_span, format!("tunable bond ({n}, {m}) is not in the network")),
                }
            }
            ids
        }
    };
    if !bond_ids.is_empty() {
        let spread = match (tun.bond_spread_cm, generated) {
            (Some(s), _) => s / 100.0,
            (None, Some((_, s))) => s,
            (None, None) => return loc.err(tun_span, "tunable bonds need bond_spread_cm"),
        };
        if !(spread > 0.0) {
            return loc.err(tun_span, "bond_spread_cm must be positive");
        }
        for id in bond_ids {
            let length = graph.bond(id).length;
            let centre = generated.map(|(mean, _)| mean).unwrap_or(length);
            let (lo, hi) = (centre - spread, centre + spread);
            if !(lo > 0.0) {
                return loc.err(tun_span, format!("bond length box [{lo}, {hi}] m is not positive"));
            }
            entries.push(Parameter::new(ParamKind::BondLength(id), length.clamp(lo, hi), lo, hi));
        }
    }
    if tun.shifter {
        let Some((id, steps)) = shifter_bond else {
            return loc.err(tun_span, "shifter is tunable but the network has no shifter");
        };
        entries.push(Parameter::new(
            ParamKind::ShifterTravel(id),
            shifter::travel_mm(steps) / 1000.0,
            shifter::TRAVEL_MIN_MM / 1000.0,
            shifter::TRAVEL_MAX_MM / 1000.0,
        ));
    }
    for &a in &tun.amplitudes {
        let l = lead(a, tun_span.clone(), "tunable amplitude")?;
        let v = wavefront.amplitude(l).clamp(AMPLITUDE_BOUNDS.0, AMPLITUDE_BOUNDS.1);
        entries.push(Parameter::new(
            ParamKind::Amplitude(l),
            v,
            AMPLITUDE_BOUNDS.0,
            AMPLITUDE_BOUNDS.1,
        ));
    }
    for &a in &tun.phases {
        let l = lead(a, tun_span.clone(), "tunable phase")?;
        entries.push(Parameter::phase(l, wavefront.phase(l)));
    }
    if entries.is_empty() {
        return loc.err(tun_span, "no tunable parameters");
    }
    let params = ParameterVector::new(entries, &graph, &wavefront).or_else(|e| loc.err(tun_span.clone(), e))?;

    let mut optimizer = OptimizerConfig::new(objective.sense());
    optimizer.seed = config.seed;
    let mut target = None;
    if let Some(sec) = &config.optimizer {
        let span = sec.span();
        let sec = sec.get_ref();
        optimizer.method = sec.method.unwrap_or(optimizer.method);
        optimizer.max_iterations = sec.max_iterations.unwrap_or(optimizer.max_iterations);
        optimizer.tolerance = sec.tolerance.unwrap_or(optimizer.tolerance);
        optimizer.window = sec.window.unwrap_or(optimizer.window);
        optimizer.gradient_tolerance = sec.gradient_tolerance.unwrap_or(optimizer.gradient_tolerance);
        optimizer.initial_step = sec.initial_step.unwrap_or(optimizer.initial_step);
        optimizer.max_step = sec.max_step.unwrap_or(optimizer.max_step.max(optimizer.initial_step));
        target = sec.target;
        if let Err(e) = optimizer.validate() {
            return loc.err(span, e);
        }
    }

    let instrument = config
        .instrument
        .as_ref()
        .map(|s| s.get_ref().clone())
        .unwrap_or_default();
    if instrument.repeats < 1 || !(instrument.noise_sigma >= 0.0) {
        let span = config.instrument.as_ref().map(|s| s.span()).unwrap_or(0..0);
        return loc.err(span, "instrument needs repeats >= 1 and noise_sigma >= 0");
    }

    let hash = scenario_hash(&config)?;
    Ok(Scenario {
        name: config.name.clone(),
        mode: config.mode,
        seed: config.seed,
        frequency,
        graph,
        wavefront,
        objective,
        params,
        optimizer,
        target,
        instrument,
        output: config.output.clone().unwrap_or_default(),
        hash,
        config,
        source: text.to_string(),
    })
}

/// sha256 over the re-serialized configuration (fixed key order, comments
/// and formatting dropped) followed by the seed.
fn scenario_hash(config: &ScenarioConfig) -> Result<String> {
    let canonical = toml::to_string(config).map_err(|e| Error::Scenario(format!("cannot serialize scenario: {e}")))?;
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    h.update(b"\nseed=");
    h.update(config.seed.to_le_bytes());
    let mut out = String::with_capacity(64);
    for byte in h.finalize() {
        let _ = write!(out, "{byte:02x}");
    }
    Ok(out)
}

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig2_tmt", include_str!("../scenarios/fig2_tmt.toml")),
    ("fig2_cpa", include_str!("../scenarios/fig2_cpa.toml")),
    ("fig2_invis", include_str!("../scenarios/fig2_invis.toml")),
    ("fig3_tmt_sim", include_str!("../scenarios/fig3_tmt_sim.toml")),
    ("fig3_cpa_sim", include_str!("../scenarios/fig3_cpa_sim.toml")),
    ("fig3_invis_sim", include_str!("../scenarios/fig3_invis_sim.toml")),
];

pub fn bundled(name: &str) -> Option<Result<Scenario>> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text))
}
