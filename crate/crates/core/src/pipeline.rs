//! End-to-end evaluation: scheme → heralded state → rate report, plus
//! per-distance parameter optimization and distance sweeps.

use crate::chsh::{key_rates, MeasurementSettings, RateReport};
use crate::error::{Error, Result};
use crate::optimizer::{maximize, OptimizationResult, OptimizationSpec, VariableSpec};
use crate::par;
use crate::schemes::{run_scheme, PairSourceModel, SchemeConfig, SchemeKind, SingleSourceModel};

/// The two key-rate analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    /// Keys from both-conclusive rounds only, certified by `S_cc`.
    A,
    /// Every round kept under the deterministic ⊥ → +1 assignment, certified
    /// by `S_det`.
    B,
}

impl Analysis {
    pub fn label(&self) -> &'static str {
        match self {
            Analysis::A => "A",
            Analysis::B => "B",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Analysis::A),
            "B" | "b" => Ok(Analysis::B),
            other => Err(Error::InvalidConfig(format!(
                "unknown analysis {other:?}, expected A or B"
            ))),
        }
    }

    /// Secret bits per source pulse under this analysis.
    pub fn rate(&self, report: &RateReport) -> f64 {
        match self {
            Analysis::A => report.rate_a,
            Analysis::B => report.rate_b,
        }
    }

    pub fn qber(&self, report: &RateReport) -> Option<f64> {
        match self {
            Analysis::A => report.qber_conclusive,
            Analysis::B => Some(report.qber_deterministic),
        }
    }
}

/// Runs the configured scheme and evaluates both analyses at the standard
/// CHSH angles, with measurement detectors at the config's `eta_det`.
pub fn evaluate(config: &SchemeConfig) -> Result<RateReport> {
    let outcome = run_scheme(config)?;
    if outcome.herald_probability <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    key_rates(
        &outcome.sigma_ab,
        outcome.herald_probability,
        &MeasurementSettings::standard(config.eta_det),
    )
}

pub const TRANSMITTANCE_BOUNDS: (f64, f64) = (0.01, 0.999);
pub const PUMP_BOUNDS: (f64, f64) = (1e-6, 0.5);

/// The tunable parameters a config exposes: the tap transmittance for the
/// amplifier and one pump intensity per down-conversion source (the two
/// heralded singles share a pump).
pub fn free_variables(config: &SchemeConfig) -> Vec<VariableSpec> {
    let mut vars = Vec::new();
    if config.kind == SchemeKind::Amplifier {
        vars.push(VariableSpec::linear(
            "t",
            TRANSMITTANCE_BOUNDS.0,
            TRANSMITTANCE_BOUNDS.1,
        ));
    }
    if matches!(config.source_ab, PairSourceModel::Spdc { .. }) {
        vars.push(VariableSpec::log("lambda_ab", PUMP_BOUNDS.0, PUMP_BOUNDS.1));
    }
    if config.kind == SchemeKind::Relay && matches!(config.source_bb, PairSourceModel::Spdc { .. })
    {
        vars.push(VariableSpec::log("lambda_bb", PUMP_BOUNDS.0, PUMP_BOUNDS.1));
    }
    if config.kind == SchemeKind::Amplifier
        && matches!(config.singles, SingleSourceModel::SpdcHeralded { .. })
    {
        vars.push(VariableSpec::log(
            "lambda_single",
            PUMP_BOUNDS.0,
            PUMP_BOUNDS.1,
        ));
    }
    vars
}

/// Returns a copy of the config with the named tunables replaced.
pub fn with_parameters(
    config: &SchemeConfig,
    names: &[String],
    params: &[f64],
) -> Result<SchemeConfig> {
    if names.len() != params.len() {
        return Err(Error::InvalidConfig(
            "parameter vector length mismatch".into(),
        ));
    }
    let mut cfg = config.clone();
    for (name, &value) in names.iter().zip(params.iter()) {
        match name.as_str() {
            "t" => cfg.splitter_transmittance = value,
            "lambda_ab" => cfg.source_ab = PairSourceModel::Spdc { lambda: value },
            "lambda_bb" => cfg.source_bb = PairSourceModel::Spdc { lambda: value },
            "lambda_single" => cfg.singles = SingleSourceModel::SpdcHeralded { lambda: value },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown tunable parameter {other:?}"
                )))
            }
        }
    }
    Ok(cfg)
}

/// Optimizer controls exposed to callers; variable bounds are fixed by
/// [`free_variables`].
#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    pub multistarts: usize,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            multistarts: 8,
            max_evals: 4000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizedPoint {
    pub config: SchemeConfig,
    pub report: RateReport,
    pub optimization: OptimizationResult,
}

/// Maximizes the chosen analysis' per-pulse rate over the config's free
/// variables and re-evaluates the winner.
pub fn optimize_point(
    template: &SchemeConfig,
    analysis: Analysis,
    options: &OptimizeOptions,
) -> Result<OptimizedPoint> {
    let variables = free_variables(template);
    let names: Vec<String> = variables.iter().map(|v| v.name.clone()).collect();
    let mut spec = OptimizationSpec::new(variables, options.seed);
    spec.multistarts = options.multistarts;
    spec.max_evals = options.max_evals;
    let optimization = maximize(&spec, |params| {
        let cfg = with_parameters(template, &names, params)?;
        Ok(analysis.rate(&evaluate(&cfg)?))
    })?;
    let config = with_parameters(template, &names, &optimization.params)?;
    let report = evaluate(&config)?;
    Ok(OptimizedPoint {
        config,
        report,
        optimization,
    })
}

/// One row of a sweep: the operating point and everything the analyses
/// reported there. Optional fields do not apply to the row's scheme (or are
/// undefined, like `log10_rate` at rate zero).
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRatePoint {
    pub distance_km: f64,
    pub scheme: SchemeKind,
    pub analysis: Analysis,
    pub eta_det: f64,
    pub eta_c: f64,
    pub t_opt: Option<f64>,
    pub lambda_ab_opt: Option<f64>,
    pub lambda_bb_opt: Option<f64>,
    pub lambda_single_opt: Option<f64>,
    pub herald_prob: f64,
    pub mu_cc: f64,
    pub s_cc: Option<f64>,
    pub s_det: f64,
    pub qber: Option<f64>,
    pub rate_per_pulse: f64,
    pub log10_rate: Option<f64>,
}

fn point_from(config: &SchemeConfig, analysis: Analysis, report: &RateReport) -> KeyRatePoint {
    let rate = analysis.rate(report);
    let lambda_of = |model: &PairSourceModel| match model {
        PairSourceModel::Spdc { lambda } => Some(*lambda),
        PairSourceModel::Fixed(_) => None,
    };
    KeyRatePoint {
        distance_km: config.distance_km,
        scheme: config.kind,
        analysis,
        eta_det: config.eta_det,
        eta_c: config.eta_c,
        t_opt: (config.kind == SchemeKind::Amplifier).then_some(config.splitter_transmittance),
        lambda_ab_opt: lambda_of(&config.source_ab),
        lambda_bb_opt: (config.kind == SchemeKind::Relay)
            .then(|| lambda_of(&config.source_bb))
            .flatten(),
        lambda_single_opt: match (config.kind, &config.singles) {
            (SchemeKind::Amplifier, SingleSourceModel::SpdcHeralded { lambda }) => Some(*lambda),
            _ => None,
        },
        herald_prob: report.herald_probability,
        mu_cc: report.mu_cc,
        s_cc: report.s_cc,
        s_det: report.s_det,
        qber: analysis.qber(report),
        rate_per_pulse: rate,
        log10_rate: (rate > 0.0).then(|| rate.log10()),
    }
}

/// Evaluates (or optimizes) one fixed configuration and renders the row.
pub fn evaluate_point(config: &SchemeConfig, analysis: Analysis) -> Result<KeyRatePoint> {
    Ok(point_from(config, analysis, &evaluate(config)?))
}

#[derive(Debug, Clone)]
pub struct SweepRequest {
    /// Everything but the distance; each sweep point copies this and sets
    /// `distance_km`.
    pub template: SchemeConfig,
    pub analysis: Analysis,
    pub start_km: f64,
    pub stop_km: f64,
    pub step_km: f64,
    /// Optimize the free variables at every distance; when off, the template's
    /// own parameter values are used as-is.
    pub optimize: bool,
    pub options: OptimizeOptions,
}

impl SweepRequest {
    pub fn validate(&self) -> Result<()> {
        self.template.validate()?;
        if !(self.step_km > 0.0) {
            return Err(Error::InvalidParameter {
                name: "step_km",
                value: self.step_km,
                constraint: "(0, ∞)",
            });
        }
        if !(self.start_km <= self.stop_km) || self.start_km < 0.0 {
            return Err(Error::InvalidParameter {
                name: "start_km",
                value: self.start_km,
                constraint: "0 ≤ start ≤ stop",
            });
        }
        Ok(())
    }

    pub fn distances(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let d = self.start_km + self.step_km * k as f64;
            if d > self.stop_km + 1e-9 {
                break;
            }
            out.push(d);
            k += 1;
        }
        out
    }
}

/// Runs a distance sweep. Points evaluate concurrently; rows come back in
/// distance order and are bit-identical for a fixed request (each point's
/// optimizer is seeded from the request seed and the point index).
pub fn run_sweep(request: &SweepRequest) -> Result<Vec<KeyRatePoint>> {
    request.validate()?;
    let distances = request.distances();
    let rows: Vec<Result<KeyRatePoint>> = par::map_indexed(
        &distances.iter().enumerate().collect::<Vec<_>>(),
        |&(index, &distance_km)| {
            let mut config = request.template.clone();
            config.distance_km = distance_km;
            if request.optimize && !free_variables(&config).is_empty() {
                let mut options = request.options;
                options.seed = request.options.seed.wrapping_add(index as u64);
                let point = optimize_point(&config, request.analysis, &options)?;
                Ok(point_from(&point.config, request.analysis, &point.report))
            } else {
                evaluate_point(&config, request.analysis)
            }
        },
    );
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::PairDistribution;
    use approx::assert_abs_diff_eq;

    fn relay_template() -> SchemeConfig {
        let mut cfg = SchemeConfig::relay(
            PairSourceModel::Spdc { lambda: 0.05 },
            PairSourceModel::Spdc { lambda: 0.05 },
        );
        cfg.n_max_pairs = 3;
        cfg
    }

    #[test]
    fn evaluate_reports_consistent_rates() {
        let report = evaluate(&relay_template()).unwrap();
        assert_abs_diff_eq!(
            report.rate_a,
            report.herald_probability * report.secret_fraction_a,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            report.rate_b,
            report.herald_probability * report.secret_fraction_b,
            epsilon = 1e-15
        );
        assert!(report.rate_b > 0.0);
    }

    #[test]
    fn free_variable_sets_match_the_source_models() {
        let names = |cfg: &SchemeConfig| -> Vec<String> {
            free_variables(cfg).into_iter().map(|v| v.name).collect()
        };
        assert_eq!(names(&relay_template()), ["lambda_ab", "lambda_bb"]);

        let amp = SchemeConfig::amplifier(
            PairSourceModel::Spdc { lambda: 0.1 },
            SingleSourceModel::SpdcHeralded { lambda: 0.1 },
            0.9,
        );
        assert_eq!(names(&amp), ["t", "lambda_ab", "lambda_single"]);

        let fixed = SchemeConfig::amplifier(
            PairSourceModel::Fixed(PairDistribution::single_pair(0.5).unwrap()),
            SingleSourceModel::Ideal,
            0.9,
        );
        assert_eq!(names(&fixed), ["t"]);
    }

    #[test]
    fn with_parameters_substitutes_by_name() {
        let cfg = SchemeConfig::amplifier(
            PairSourceModel::Spdc { lambda: 0.1 },
            SingleSourceModel::SpdcHeralded { lambda: 0.1 },
            0.9,
        );
        let names: Vec<String> = free_variables(&cfg).into_iter().map(|v| v.name).collect();
        let new = with_parameters(&cfg, &names, &[0.7, 0.02, 0.03]).unwrap();
        assert_eq!(new.splitter_transmittance, 0.7);
        assert_eq!(new.source_ab, PairSourceModel::Spdc { lambda: 0.02 });
        assert_eq!(
            new.singles,
            SingleSourceModel::SpdcHeralded { lambda: 0.03 }
        );
        assert!(with_parameters(&cfg, &names, &[0.7]).is_err());
    }

    #[test]
    fn sweep_rows_cover_the_distances_in_order() {
        let request = SweepRequest {
            template: relay_template(),
            analysis: Analysis::B,
            start_km: 0.0,
            stop_km: 40.0,
            step_km: 10.0,
            optimize: false,
            options: OptimizeOptions::default(),
        };
        let rows = run_sweep(&request).unwrap();
        let distances: Vec<f64> = rows.iter().map(|r| r.distance_km).collect();
        assert_eq!(distances, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
        for row in &rows {
            assert_eq!(row.analysis, Analysis::B);
            assert!(row.herald_prob > 0.0);
            assert_eq!(row.qber, Some(row.qber.unwrap()));
            match row.log10_rate {
                Some(lg) => assert_abs_diff_eq!(lg, row.rate_per_pulse.log10(), epsilon = 1e-12),
                None => assert_eq!(row.rate_per_pulse, 0.0),
            }
        }
    }

    #[test]
    fn sweeps_are_reproducible() {
        let request = SweepRequest {
            template: relay_template(),
            analysis: Analysis::B,
            start_km: 0.0,
            stop_km: 20.0,
            step_km: 10.0,
            optimize: true,
            options: OptimizeOptions {
                multistarts: 2,
                max_evals: 120,
                seed: 9,
            },
        };
        let a = run_sweep(&request).unwrap();
        let b = run_sweep(&request).unwrap();
        assert_eq!(a, b);
        assert!(a[0].rate_per_pulse > 0.0);
        assert!(a[0].lambda_ab_opt.unwrap() > 0.0);
    }

    #[test]
    fn zero_efficiency_detectors_yield_zero_rate() {
        let mut cfg = relay_template();
        cfg.eta_det = 0.0;
        // Heralding never fires with dead detectors, so evaluation reports
        // a zero-weight herald.
        assert!(matches!(evaluate(&cfg), Err(Error::ZeroWeight)));
        // Far below the assignment threshold the deterministic analysis dies,
        // while the conclusive-sifted one may survive on post-selection.
        cfg.eta_det = 0.5;
        let report = evaluate(&cfg).unwrap();
        assert!(report.s_det < 2.0);
        assert_eq!(report.rate_b, 0.0);
        assert!(report.rate_a >= 0.0);
    }
}
