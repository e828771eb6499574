//! Modality objectives, their adjoint sources and explicit wavefront partials.
//!
//! Every objective is `offset + sign * sum_t |phi_t - I_ref(t)|^2 / D_t` where
//! `D_t` is either the total injected power or the power of one reference
//! lead. Compiling the three modalities into that shape lets one routine
//! handle values, Wirtinger derivatives and explicit partials.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MetricGraph;
use crate::system::FieldAccess;
use crate::wave::Wavefront;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Tmt,
    Cpa,
    Invis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    /// `+1` for maximization, `-1` for minimization.
    pub fn signum(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }

    /// Whether `candidate` is at least as good as `incumbent`.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        self.signum() * (candidate - incumbent) >= 0.0
    }
}

/// Channel roles, as lead indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSpec {
    /// Deliver the power injected on `injected` to `targeted`.
    Tmt { injected: Vec<usize>, targeted: Vec<usize> },
    /// Absorb everything injected on `injected`; all other leads count as
    /// transmission channels.
    Cpa { injected: Vec<usize> },
    /// Make the signal leaving `probe` equal the one injected on
    /// `interrogation`, with a compensating injection on `control`.
    Invis {
        interrogation: usize,
        probe: usize,
        control: usize,
        control_penalty: bool,
    },
}

impl ObjectiveSpec {
    pub fn modality(&self) -> Modality {
        match self {
            ObjectiveSpec::Tmt { .. } => Modality::Tmt,
            ObjectiveSpec::Cpa { .. } => Modality::Cpa,
            ObjectiveSpec::Invis { .. } => Modality::Invis,
        }
    }

    pub fn sense(&self) -> Sense {
        match self {
            ObjectiveSpec::Tmt { .. } | ObjectiveSpec::Cpa { .. } => Sense::Maximize,
            ObjectiveSpec::Invis { .. } => Sense::Minimize,
        }
    }

    /// Leads that carry power into the network.
    pub fn injected(&self) -> Vec<usize> {
        match self {
            ObjectiveSpec::Tmt { injected, .. } | ObjectiveSpec::Cpa { injected } => injected.clone(),
            ObjectiveSpec::Invis {
                interrogation, control, ..
            } => vec![*interrogation, *control],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Reflection,
    Transmission,
    Mismatch,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Norm {
    InputPower,
    LeadPower(usize),
}

#[derive(Debug, Clone, Copy)]
struct Term {
    role: Role,
    vertex: usize,
    reference: Option<usize>,
    norm: Norm,
}

/// Signed contribution of each term family; `total()` is the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TermBreakdown {
    pub offset: f64,
    pub reflection: f64,
    pub transmission: f64,
    pub mismatch: f64,
    pub control: f64,
}

impl TermBreakdown {
    pub fn total(&self) -> f64 {
        self.offset + self.reflection + self.transmission + self.mismatch + self.control
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub breakdown: TermBreakdown,
}

/// A wavefront entry that an objective may depend on explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavefrontParam {
    Amplitude(usize),
    Phase(usize),
}

/// An [`ObjectiveSpec`] bound to a concrete graph.
#[derive(Debug, Clone)]
pub struct Objective {
    spec: ObjectiveSpec,
    offset: f64,
    sign: f64,
    terms: Vec<Term>,
    injected: Vec<usize>,
    vertex_count: usize,
    lead_count: usize,
}

impl Objective {
    pub fn new(spec: ObjectiveSpec, graph: &MetricGraph) -> Result<Self> {
        let leads = graph.lead_count();
        let check = |lead: usize, what: &str| -> Result<()> {
            if lead >= leads {
                Err(Error::InvalidObjective(format!(
                    "{what} channel {lead} does not exist ({leads} leads)"
                )))
            } else {
                Ok(())
            }
        };
        let injected = spec.injected();
        if injected.is_empty() {
            return Err(Error::InvalidObjective("no injected channels".into()));
        }
        for &l in &injected {
            check(l, "injected")?;
        }
        if has_duplicates(&injected) {
            return Err(Error::InvalidObjective("injected channels repeat".into()));
        }
        let term = |role, lead, reference, norm| Term {
            role,
            vertex: graph.lead_vertex(lead),
            reference,
            norm,
        };
        let (offset, sign, terms) = match &spec {
            ObjectiveSpec::Tmt { injected, targeted } => {
                if targeted.is_empty() {
                    return Err(Error::InvalidObjective("no targeted channels".into()));
                }
                for &t in targeted {
                    check(t, "targeted")?;
                    if injected.contains(&t) {
                        return Err(Error::InvalidObjective(format!(
                            "channel {t} is both injected and targeted"
                        )));
                    }
                }
                if has_duplicates(targeted) {
                    return Err(Error::InvalidObjective("targeted channels repeat".into()));
                }
                let terms = targeted
                    .iter()
                    .map(|&t| term(Role::Transmission, t, None, Norm::InputPower))
                    .collect();
                (0.0, 1.0, terms)
            }
            ObjectiveSpec::Cpa { injected } => {
                let mut terms: Vec<Term> = injected
                    .iter()
                    .map(|&l| term(Role::Reflection, l, Some(l), Norm::InputPower))
                    .collect();
                terms.extend(
                    (0..leads)
                        .filter(|l| !injected.contains(l))
                        .map(|l| term(Role::Transmission, l, None, Norm::InputPower)),
                );
                (1.0, -1.0, terms)
            }
            &ObjectiveSpec::Invis {
                interrogation,
                probe,
                control,
                control_penalty,
            } => {
                check(probe, "probe")?;
                if interrogation == probe || interrogation == control || probe == control {
                    return Err(Error::InvalidObjective(
                        "interrogation, probe and control channels must be distinct".into(),
                    ));
                }
                let mut terms = vec![
                    term(
                        Role::Mismatch,
                        probe,
                        Some(interrogation),
                        Norm::LeadPower(interrogation),
                    ),
                    term(Role::Reflection, interrogation, Some(interrogation), Norm::InputPower),
                ];
                terms.extend(
                    (0..leads)
                        .filter(|&l| l != probe && l != control && l != interrogation)
                        .map(|l| term(Role::Transmission, l, None, Norm::InputPower)),
                );
                if control_penalty {
                    terms.push(term(Role::Control, control, Some(control), Norm::InputPower));
                }
                (0.0, 1.0, terms)
            }
        };
        Ok(Objective {
            spec,
            offset,
            sign,
            terms,
            injected,
            vertex_count: graph.vertex_count(),
            lead_count: leads,
        })
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn sense(&self) -> Sense {
        self.spec.sense()
    }

    pub fn injected(&self) -> &[usize] {
        &self.injected
    }

    /// Vertices whose forward voltage the objective reads.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.iter().map(|t| t.vertex).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Checks that the wavefront matches the lead layout and that only
    /// injected channels carry power.
    pub fn check_wavefront(&self, wavefront: &Wavefront) -> Result<()> {
        if wavefront.lead_count() != self.lead_count {
            return Err(Error::DimensionMismatch {
                expected: self.lead_count,
                found: wavefront.lead_count(),
            });
        }
        if let Some(l) = (0..self.lead_count).find(|l| !self.injected.contains(l) && wavefront.amplitude(*l) != 0.0) {
            return Err(Error::InvalidWavefront(format!(
                "lead {l} is not an injected channel but has amplitude {}",
                wavefront.amplitude(l)
            )));
        }
        Ok(())
    }

    fn input_power(&self, wavefront: &Wavefront) -> f64 {
        self.injected.iter().map(|&l| wavefront.amplitude(l).powi(2)).sum()
    }

    fn denominator(&self, norm: Norm, input_power: f64, wavefront: &Wavefront) -> f64 {
        match norm {
            Norm::InputPower => input_power,
            Norm::LeadPower(l) => wavefront.amplitude(l).powi(2),
        }
    }

    fn prepare(&self, wavefront: &Wavefront) -> Result<f64> {
        self.check_wavefront(wavefront)?;
        let p = self.input_power(wavefront);
        let reference_dead = self
            .terms
            .iter()
            .any(|t| matches!(t.norm, Norm::LeadPower(l) if wavefront.amplitude(l) == 0.0));
        if !(p > 0.0) || reference_dead {
            return Err(Error::ZeroInputPower);
        }
        Ok(p)
    }

    fn residual<F: FieldAccess + ?Sized>(term: &Term, phi: &F, wavefront: &Wavefront) -> Complex64 {
        let v = phi.voltage(term.vertex);
        match term.reference {
            Some(r) => v - wavefront.input(r),
            None => v,
        }
    }

    pub fn evaluate<F: FieldAccess + ?Sized>(&self, phi: &F, wavefront: &Wavefront) -> Result<ObjectiveValue> {
        let p = self.prepare(wavefront)?;
        let mut breakdown = TermBreakdown {
            offset: self.offset,
            ..TermBreakdown::default()
        };
        for t in &self.terms {
            let w = self.sign * Self::residual(t, phi, wavefront).norm_sqr() / self.denominator(t.norm, p, wavefront);
            match t.role {
                Role::Reflection => breakdown.reflection += w,
                Role::Transmission => breakdown.transmission += w,
                Role::Mismatch => breakdown.mismatch += w,
                Role::Control => breakdown.control += w,
            }
        }
        Ok(ObjectiveValue {
            value: breakdown.total(),
            breakdown,
        })
    }

    /// `dg/dPhi` with `Phi*` held fixed. Nonzero only at lead vertices.
    pub fn adjoint_source<F: FieldAccess + ?Sized>(&self, phi: &F, wavefront: &Wavefront) -> Result<Vec<Complex64>> {
        let p = self.prepare(wavefront)?;
        let mut source = vec![Complex64::new(0.0, 0.0); self.vertex_count];
        for t in &self.terms {
            let d = self.denominator(t.norm, p, wavefront);
            source[t.vertex] += Self::residual(t, phi, wavefront).conj() * (self.sign / d);
        }
        Ok(source)
    }

    /// Partial derivative with respect to one wavefront entry, holding the
    /// field fixed.
    pub fn explicit_partial<F: FieldAccess + ?Sized>(
        &self,
        phi: &F,
        wavefront: &Wavefront,
        param: WavefrontParam,
    ) -> Result<f64> {
        let p = self.prepare(wavefront)?;
        let mut total = 0.0;
        for t in &self.terms {
            let z = Self::residual(t, phi, wavefront);
            let d = self.denominator(t.norm, p, wavefront);
            let contribution = match param {
                WavefrontParam::Amplitude(l) => {
                    let numerator = match t.reference {
                        Some(r) if r == l => -2.0 * (z.conj() * Complex64::from_polar(1.0, wavefront.phase(l))).re,
                        _ => 0.0,
                    };
                    let d_denominator = match t.norm {
                        Norm::InputPower if self.injected.contains(&l) => 2.0 * wavefront.amplitude(l),
                        Norm::LeadPower(r) if r == l => 2.0 * wavefront.amplitude(l),
                        _ => 0.0,
                    };
                    numerator / d - z.norm_sqr() * d_denominator / (d * d)
                }
                WavefrontParam::Phase(l) => match t.reference {
                    Some(r) if r == l => {
                        let di = Complex64::i() * wavefront.input(l);
                        -2.0 * (z.conj() * di).re / d
                    }
                    _ => 0.0,
                },
            };
            total += self.sign * contribution;
        }
        Ok(total)
    }
}

fn has_duplicates(items: &[usize]) -> bool {
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).any(|w| w[0] == w[1])
}
