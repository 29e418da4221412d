//! Scenario configuration: a TOML file with nested sections describing the
//! domain, the phantom, the accessible arc, the needle family, and the
//! solver knobs of each workflow.  All numeric fields are decimal.

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, FanSpec, MeshStrategy, Point};
use crate::probe::{ImpactEstimator, ProbeParams};
use crate::scenario::{CoefficientField, ConductivityScenario, InclusionShape};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub domain: DomainSection,
    pub mesh: MeshSection,
    pub gamma0: FieldSection,
    #[serde(default)]
    pub inclusion: Option<ShapeSection>,
    #[serde(default)]
    pub gamma_inside: Option<FieldSection>,
    #[serde(default)]
    pub gamma_arc: Option<ArcSection>,
    #[serde(default)]
    pub needles: Option<NeedleSection>,
    #[serde(default)]
    pub runge: Option<RungeSection>,
    #[serde(default)]
    pub probe: Option<ProbeSection>,
    #[serde(default)]
    pub inside_dtn: Option<InsideDtnSection>,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub kernels: Option<KernelsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub kind: String,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub h: f64,
    /// "rings" | "lattice"; lattice is forced when interface conformity is
    /// requested.
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default)]
    pub conform_interface: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default)]
    pub expr: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSection {
    pub kind: String,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSection {
    pub theta0: f64,
    pub theta1: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeedleSection {
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub anchor_theta0: Option<f64>,
    #[serde(default)]
    pub anchor_theta1: Option<f64>,
    #[serde(default)]
    pub target_theta0: Option<f64>,
    #[serde(default)]
    pub target_theta1: Option<f64>,
    #[serde(default)]
    pub waypoints: Option<Vec<[f64; 2]>>,
    /// Additional explicit needles appended to the fan.
    #[serde(default)]
    pub extra: Vec<ExplicitNeedle>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitNeedle {
    /// Boundary angles of the endpoints.
    pub anchor: f64,
    pub target: f64,
    #[serde(default)]
    pub waypoints: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RungeSection {
    /// Penalties run from 10^-first to 10^-last.
    #[serde(default)]
    pub rho_first_exp: Option<i32>,
    #[serde(default)]
    pub rho_last_exp: Option<i32>,
    #[serde(default)]
    pub cond_cap: Option<f64>,
    /// "h1arc" | "l2"
    #[serde(default)]
    pub smoothing: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default)]
    pub delta_tube: Option<f64>,
    #[serde(default)]
    pub horn_widen: Option<f64>,
    #[serde(default)]
    pub boundary_band: Option<f64>,
    #[serde(default)]
    pub error_cap: Option<f64>,
    #[serde(default)]
    pub spread_frac: Option<f64>,
    /// "own_max" | "threshold"
    #[serde(default)]
    pub estimator: Option<String>,
    #[serde(default)]
    pub fraction: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub tau_abs: Option<f64>,
    #[serde(default)]
    pub level_ratio: Option<f64>,
    #[serde(default)]
    pub refine: Option<usize>,
    #[serde(default)]
    pub consensus: Option<bool>,
    #[serde(default)]
    pub calibrate_bias: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsideDtnSection {
    #[serde(default)]
    pub family_size: Option<usize>,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub completion_tikhonov: Option<f64>,
    #[serde(default)]
    pub completion_cond_cap: Option<f64>,
    #[serde(default)]
    pub inversion_cond_cap: Option<f64>,
    #[serde(default)]
    pub rho_first_exp: Option<i32>,
    #[serde(default)]
    pub rho_last_exp: Option<i32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub enabled: bool,
    #[serde(default)]
    pub rel_sigma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSection {
    #[serde(default)]
    pub draws: Option<usize>,
    #[serde(default)]
    pub inject_failure: Option<bool>,
}

/// Parsed, validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub h: f64,
    pub strategy: MeshStrategy,
    pub conform_interface: bool,
    pub scenario: ConductivityScenario,
    pub gamma_arc: (f64, f64),
    pub fan: Option<FanSpec>,
    pub extra_needles: Vec<ExplicitNeedle>,
    pub schedule: Vec<f64>,
    pub runge_cond_cap: f64,
    pub smoothing: crate::runge::SmoothingNorm,
    pub probe: ProbeParams,
    pub consensus: bool,
    pub calibrate_bias: bool,
    pub inside_dtn: crate::inside_dtn::InsideDtnParams,
    pub noise_rel_sigma: Option<f64>,
    pub seed: u64,
    pub kernel_draws: usize,
    pub kernel_inject_failure: bool,
}

fn parse_field(s: &FieldSection, name: &str) -> Result<CoefficientField> {
    match s.kind.as_str() {
        "constant" => Ok(CoefficientField::constant(s.value.ok_or_else(|| {
            Error::Config(format!("[{name}] constant needs `value`"))
        })?)),
        "radial" => {
            let center = s
                .center
                .ok_or_else(|| Error::Config(format!("[{name}] radial needs `center`")))?;
            let profile = s
                .profile
                .as_ref()
                .ok_or_else(|| Error::Config(format!("[{name}] radial needs `profile`")))?;
            CoefficientField::radial(Point::new(center[0], center[1]), profile)
        }
        "expr" => {
            let expr = s
                .expr
                .as_ref()
                .ok_or_else(|| Error::Config(format!("[{name}] expr needs `expr`")))?;
            CoefficientField::expression(expr)
        }
        other => Err(Error::Config(format!(
            "[{name}] unknown coefficient kind '{other}'"
        ))),
    }
}

fn parse_shape(s: &ShapeSection) -> Result<InclusionShape> {
    match s.kind.as_str() {
        "disk" => {
            let c = s
                .center
                .ok_or_else(|| Error::Config("[inclusion] disk needs `center`".into()))?;
            let r = s
                .radius
                .ok_or_else(|| Error::Config("[inclusion] disk needs `radius`".into()))?;
            Ok(InclusionShape::disk(c[0], c[1], r))
        }
        "polygon" => {
            let v = s
                .vertices
                .as_ref()
                .ok_or_else(|| Error::Config("[inclusion] polygon needs `vertices`".into()))?;
            InclusionShape::polygon(v.iter().map(|&p| Point::new(p[0], p[1])).collect())
        }
        other => Err(Error::Config(format!("unknown inclusion kind '{other}'"))),
    }
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<RunConfig> {
        let file: ConfigFile =
            toml::from_str(src).map_err(|e| Error::Config(format!("parse failure: {e}")))?;
        Self::from_file(file)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src)
    }

    fn from_file(file: ConfigFile) -> Result<RunConfig> {
        let domain = match file.domain.kind.as_str() {
            "disk" => {
                let c = file.domain.center.unwrap_or([0.0, 0.0]);
                let r = file
                    .domain
                    .radius
                    .ok_or_else(|| Error::Config("[domain] disk needs `radius`".into()))?;
                DomainSpec::disk(Point::new(c[0], c[1]), r)
            }
            "polygon" => {
                let v = file
                    .domain
                    .vertices
                    .as_ref()
                    .ok_or_else(|| Error::Config("[domain] polygon needs `vertices`".into()))?;
                DomainSpec::polygon(v.iter().map(|&p| Point::new(p[0], p[1])).collect())?
            }
            other => return Err(Error::Config(format!("unknown domain kind '{other}'"))),
        };
        let h = file.mesh.h;
        if !(h > 0.0) {
            return Err(Error::Config("[mesh] h must be positive".into()));
        }
        let conform_interface = file.mesh.conform_interface.unwrap_or(false);
        let strategy = match file.mesh.strategy.as_deref() {
            Some("rings") => MeshStrategy::Rings,
            Some("lattice") => MeshStrategy::Lattice,
            None => {
                if conform_interface || !matches!(domain, DomainSpec::Disk { .. }) {
                    MeshStrategy::Lattice
                } else {
                    MeshStrategy::Rings
                }
            }
            Some(other) => {
                return Err(Error::Config(format!("unknown mesh strategy '{other}'")))
            }
        };
        let gamma0 = parse_field(&file.gamma0, "gamma0")?;
        let scenario = match (&file.inclusion, &file.gamma_inside) {
            (Some(shape), Some(inside)) => ConductivityScenario::with_inclusion(
                gamma0,
                parse_shape(shape)?,
                parse_field(inside, "gamma_inside")?,
            ),
            (None, None) => ConductivityScenario::background(gamma0),
            _ => {
                return Err(Error::Config(
                    "inclusion and gamma_inside must be given together".into(),
                ))
            }
        };
        let gamma_arc = match &file.gamma_arc {
            Some(a) => (a.theta0, a.theta1),
            None => (0.0, std::f64::consts::TAU),
        };
        let fan = file.needles.as_ref().and_then(|n| {
            n.count.map(|count| {
                let a0 = n.anchor_theta0.unwrap_or(0.0);
                let a1 = n.anchor_theta1.unwrap_or(0.0);
                // defaults shoot roughly across the domain; for an extent
                // anchor arc the target fields are per-anchor offsets
                FanSpec {
                anchor_theta0: a0,
                anchor_theta1: a1,
                target_theta0: n
                    .target_theta0
                    .unwrap_or(a0 + std::f64::consts::PI - 1.0),
                target_theta1: n
                    .target_theta1
                    .unwrap_or(a1 + std::f64::consts::PI + 1.0),
                count,
                waypoints: n
                    .waypoints
                    .clone()
                    .unwrap_or_default()
                    .iter()
                    .map(|&p| Point::new(p[0], p[1]))
                    .collect(),
            }})
        });
        let extra_needles = file
            .needles
            .as_ref()
            .map(|n| n.extra.clone())
            .unwrap_or_default();

        let (rho_first, rho_last, runge_cond_cap, smoothing) = match &file.runge {
            Some(r) => (
                r.rho_first_exp.unwrap_or(1),
                r.rho_last_exp.unwrap_or(10),
                r.cond_cap.unwrap_or(1e14),
                match r.smoothing.as_deref() {
                    Some("l2") => crate::runge::SmoothingNorm::L2,
                    Some("h1arc") | None => crate::runge::SmoothingNorm::H1Arc,
                    Some(other) => {
                        return Err(Error::Config(format!("unknown smoothing '{other}'")))
                    }
                },
            ),
            None => (1, 10, 1e14, crate::runge::SmoothingNorm::H1Arc),
        };
        if rho_last < rho_first {
            return Err(Error::Config("penalty schedule must descend".into()));
        }
        let schedule: Vec<f64> = (rho_first..=rho_last).map(|n| 10f64.powi(-n)).collect();

        let mut probe = ProbeParams {
            schedule: schedule.clone(),
            cond_cap: runge_cond_cap,
            ..ProbeParams::default()
        };
        let mut consensus = true;
        let mut calibrate_bias = true;
        if let Some(p) = &file.probe {
            if let Some(v) = p.delta_tube {
                probe.delta_tube = v;
            }
            if let Some(v) = p.horn_widen {
                probe.horn_widen = v;
            }
            if let Some(v) = p.boundary_band {
                probe.boundary_band = v;
            }
            if let Some(v) = p.error_cap {
                probe.error_cap = v;
            }
            if let Some(v) = p.spread_frac {
                probe.spread_frac = v;
            }
            if let Some(v) = p.level_ratio {
                probe.level_ratio = v;
            }
            if let Some(v) = p.tau_abs {
                probe.tau_abs = v;
            }
            if let Some(v) = p.refine {
                probe.refine = v;
            }
            if let Some(v) = p.consensus {
                consensus = v;
            }
            if let Some(v) = p.calibrate_bias {
                calibrate_bias = v;
            }
            probe.estimator = match p.estimator.as_deref() {
                Some("threshold") => ImpactEstimator::Threshold {
                    kappa: p.kappa.unwrap_or(10.0),
                    tau_abs: p.tau_abs.unwrap_or(0.0),
                },
                Some("own_max") | None => ImpactEstimator::OwnMaxFraction {
                    fraction: p.fraction.unwrap_or(0.88),
                    tau_abs: p.tau_abs.unwrap_or(0.0),
                },
                Some(other) => {
                    return Err(Error::Config(format!("unknown estimator '{other}'")))
                }
            };
        }

        let mut inside_dtn = crate::inside_dtn::InsideDtnParams::default();
        if let Some(d) = &file.inside_dtn {
            if let Some(v) = d.family_size {
                inside_dtn.family_size = v;
            }
            if let Some(v) = d.margin {
                inside_dtn.margin = v;
            }
            if let Some(v) = d.completion_tikhonov {
                inside_dtn.completion_tikhonov = v;
            }
            if let Some(v) = d.completion_cond_cap {
                inside_dtn.completion_cond_cap = v;
            }
            if let Some(v) = d.inversion_cond_cap {
                inside_dtn.inversion_cond_cap = v;
            }
            let first = d.rho_first_exp.unwrap_or(1);
            let last = d.rho_last_exp.unwrap_or(10);
            if last < first {
                return Err(Error::Config("inside_dtn schedule must descend".into()));
            }
            inside_dtn.schedule = (first..=last).map(|n| 10f64.powi(-n)).collect();
        }

        let noise_rel_sigma = match &file.noise {
            Some(n) if n.enabled => Some(n.rel_sigma.unwrap_or(0.0)),
            _ => None,
        };
        Ok(RunConfig {
            domain,
            h,
            strategy,
            conform_interface,
            scenario,
            gamma_arc,
            fan,
            extra_needles,
            schedule,
            runge_cond_cap,
            smoothing,
            probe,
            consensus,
            calibrate_bias,
            inside_dtn,
            noise_rel_sigma,
            seed: file.seed.unwrap_or(0),
            kernel_draws: file
                .kernels
                .as_ref()
                .and_then(|k| k.draws)
                .unwrap_or(10_000),
            kernel_inject_failure: file
                .kernels
                .as_ref()
                .and_then(|k| k.inject_failure)
                .unwrap_or(false),
        })
    }

    /// Assemble the needle family (fan plus explicit extras).
    pub fn needles(&self) -> Result<Vec<crate::geometry::Needle>> {
        let mut out = Vec::new();
        if let Some(fan) = &self.fan {
            out.extend(crate::geometry::needle_family(&self.domain, fan)?);
        }
        for e in &self.extra_needles {
            let a = self.domain.boundary_point(e.anchor);
            let b = self.domain.boundary_point(e.target);
            let mut pts = vec![a];
            pts.extend(e.waypoints.iter().map(|&p| Point::new(p[0], p[1])));
            pts.push(b);
            let n = crate::geometry::Needle::new(pts)?;
            n.validate_against(&self.domain)?;
            out.push(n);
        }
        if out.is_empty() {
            return Err(Error::Config("no needles configured".into()));
        }
        Ok(out)
    }
}
