//! Run configuration: a TOML file describing the pack, market rules,
//! controller, ageing coefficients, price scenario, optimizer settings and
//! data sources. Every referenced file is checked before any compute starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bess::{load_inverter_csv, BessConfig, InverterCurve};
use crate::cell::{load_ocv_csv, CellParams, OcvCurve};
use crate::controller::{ControllerParams, MarketRules};
use crate::data::{
    derive_rng, load_frequency_csv_mapped, stream_tag, synth_frequency, FrequencyColumns,
    FrequencyTrace, SamplePool, SynthFrequencyParams,
};
use crate::degradation::{AgeingModel, StressFactor};
use crate::economics::{german_default_levies, Levy, MarketScenario, PriceSeries};
use crate::error::{CoreError, Result};
use crate::optimizer::{OptimizerConfig, ParamBox, SweepSpec};

fn default_seed() -> u64 {
    42
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_dt() -> f64 {
    10.0
}
fn default_e_rated_mwh() -> f64 {
    1.6
}
fn default_c_rate() -> f64 {
    1.0
}
fn default_r_mw() -> f64 {
    1.0
}
fn default_intraday() -> f64 {
    40.0
}
fn default_imbalance() -> f64 {
    45.0
}
fn default_inflation() -> f64 {
    0.017
}
fn default_discount() -> f64 {
    0.017
}
fn default_synth_days() -> f64 {
    28.0
}
fn default_true() -> bool {
    true
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub cell: CellSection,
    #[serde(default)]
    pub bess: BessSection,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub ageing: AgeingSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 leaves the rayon default.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            out_dir: default_out_dir(),
            jobs: 0,
            dt_s: default_dt(),
        }
    }
}

/// Cell parameters; defaults are the shipped NMC 18650 set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub capacity_ah: Option<f64>,
    pub r0_ohm: Option<f64>,
    pub r1_ohm: Option<f64>,
    pub c1_f: Option<f64>,
    pub eta_coulomb: Option<f64>,
    pub v_nom: Option<f64>,
    pub v_cutoff_charge: Option<f64>,
    pub v_cutoff_discharge: Option<f64>,
    pub heat_capacity_j_per_k: Option<f64>,
    pub e_rated_wh: Option<f64>,
    /// Two-column CSV (soc fraction, volts) overriding the builtin curve.
    pub ocv_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BessSection {
    #[serde(default = "default_e_rated_mwh")]
    pub e_rated_mwh: f64,
    #[serde(default = "default_c_rate")]
    pub c_rate: f64,
    pub cop: Option<f64>,
    pub t_ref_c: Option<f64>,
    pub hvac_limit_frac: Option<f64>,
    /// Two-column CSV (power fraction, efficiency) overriding the builtin
    /// inverter curve.
    pub inverter_csv: Option<PathBuf>,
}

impl Default for BessSection {
    fn default() -> Self {
        Self {
            e_rated_mwh: default_e_rated_mwh(),
            c_rate: default_c_rate(),
            cop: None,
            t_ref_c: None,
            hvac_limit_frac: None,
            inverter_csv: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    #[serde(default = "default_r_mw")]
    pub r_mw: f64,
    /// Maximum recharge power in MW; absent means the full headroom above
    /// the reserve.
    pub p_rech_max_mw: Option<f64>,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self {
            r_mw: default_r_mw(),
            p_rech_max_mw: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub k_p: f64,
    pub soc_0: f64,
    pub o_d: f64,
    pub db_p: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            k_p: 2.0,
            soc_0: 0.45,
            o_d: 0.1,
            db_p: 0.2,
        }
    }
}

/// Ageing coefficient sets; defaults are documented placeholders.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeingSection {
    pub alpha_cap: Option<StressFactor>,
    pub alpha_res: Option<StressFactor>,
    pub beta_cap: Option<StressFactor>,
    pub beta_res: Option<StressFactor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    /// "moderate" or "low"; explicit prices below override the preset.
    #[serde(default)]
    pub fcr: FcrScenarioKind,
    /// Explicit FCR price path, EUR/MW/week per operational year.
    #[serde(default)]
    pub fcr_eur_per_mw_week: Vec<f64>,
    #[serde(default = "default_intraday")]
    pub intraday_eur_per_mwh: f64,
    #[serde(default = "default_imbalance")]
    pub imbalance_eur_per_mwh: f64,
    /// 15-min price CSVs (timestamp, EUR/MWh) overriding the constants.
    pub intraday_csv: Option<PathBuf>,
    pub imbalance_csv: Option<PathBuf>,
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    #[serde(default = "default_discount")]
    pub discount_rate: f64,
    /// Levy table; absent means the German default set.
    pub levies: Option<Vec<Levy>>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            fcr: FcrScenarioKind::Moderate,
            fcr_eur_per_mw_week: Vec::new(),
            intraday_eur_per_mwh: default_intraday(),
            imbalance_eur_per_mwh: default_imbalance(),
            intraday_csv: None,
            imbalance_csv: None,
            inflation: default_inflation(),
            discount_rate: default_discount(),
            levies: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcrScenarioKind {
    #[default]
    Moderate,
    Low,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub eps_req: Option<f64>,
    pub beta_conf: Option<f64>,
    pub n_c: Option<usize>,
    pub n_c_prime: Option<usize>,
    pub n_days: Option<usize>,
    pub n_check_init: Option<usize>,
    pub population: Option<usize>,
    pub stop_std_frac: Option<f64>,
    pub de_mutation_f: Option<f64>,
    pub de_crossover: Option<f64>,
    pub max_iterations: Option<usize>,
    pub c_penalty_eur: Option<f64>,
    pub c_cell_eur_per_kwh: Option<f64>,
    pub max_years: Option<usize>,
    /// Box bounds per parameter: `[lo, hi]`.
    pub k_p: Option<[f64; 2]>,
    pub soc_0: Option<[f64; 2]>,
    pub o_d: Option<[f64; 2]>,
    pub db_p: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Frequency CSVs; each file becomes one year-evaluation trace.
    #[serde(default)]
    pub frequency_csv: Vec<PathBuf>,
    /// Column mapping of the CSVs (timestamp/value names, value kind).
    #[serde(default)]
    pub columns: FrequencyColumns,
    /// Synthetic generator, used when no CSVs are given.
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_synth_days")]
    pub days: f64,
    /// Number of independent traces (year-evaluation samples).
    #[serde(default = "crate::config::default_traces")]
    pub traces: usize,
    #[serde(default = "crate::config::default_std_hz")]
    pub std_hz: f64,
    #[serde(default = "crate::config::default_corr_s")]
    pub correlation_time_s: f64,
    #[serde(default = "crate::config::default_clamp_hz")]
    pub clamp_hz: f64,
    #[serde(default)]
    pub excursions_per_day: f64,
    #[serde(default = "crate::config::default_excursion_level")]
    pub excursion_level_hz: f64,
    #[serde(default = "crate::config::default_excursion_duration")]
    pub excursion_duration_s: f64,
}

pub(crate) fn default_traces() -> usize {
    2
}
pub(crate) fn default_std_hz() -> f64 {
    0.02
}
pub(crate) fn default_corr_s() -> f64 {
    60.0
}
pub(crate) fn default_clamp_hz() -> f64 {
    0.05
}
pub(crate) fn default_excursion_level() -> f64 {
    0.15
}
pub(crate) fn default_excursion_duration() -> f64 {
    600.0
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            enabled: true,
            days: default_synth_days(),
            traces: default_traces(),
            std_hz: default_std_hz(),
            correlation_time_s: default_corr_s(),
            clamp_hz: default_clamp_hz(),
            excursions_per_day: 0.0,
            excursion_level_hz: default_excursion_level(),
            excursion_duration_s: default_excursion_duration(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "crate::config::default_sweep_energies")]
    pub energies_mwh: Vec<f64>,
    #[serde(default = "crate::config::default_sweep_c_rates")]
    pub c_rates: Vec<f64>,
    #[serde(default = "crate::config::default_sweep_costs")]
    pub cost_eur_per_kwh: Vec<f64>,
}

pub(crate) fn default_sweep_energies() -> Vec<f64> {
    (10..=25).map(|e| e as f64 / 10.0).collect()
}
pub(crate) fn default_sweep_c_rates() -> Vec<f64> {
    vec![0.6, 0.7, 1.0, 1.5]
}
pub(crate) fn default_sweep_costs() -> Vec<f64> {
    vec![500.0, 400.0, 300.0]
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            energies_mwh: default_sweep_energies(),
            c_rates: default_sweep_c_rates(),
            cost_eur_per_kwh: default_sweep_costs(),
        }
    }
}

impl RunConfig {
    /// Parse a TOML file and verify every referenced data file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CoreError::Config(format!("{e}")))?;
        cfg.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    /// Built-in defaults (synthetic data, shipped curves).
    pub fn default_config() -> Self {
        toml::from_str("").expect("empty config parses to defaults")
    }

    /// Resolve a configured path relative to the config file location.
    fn resolve(base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Fail fast: every referenced file must exist and basic numbers must be
    /// sane before any compute starts.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut check = |p: &Option<PathBuf>| {
            if let Some(p) = p {
                let resolved = Self::resolve(base, p);
                if !resolved.exists() {
                    missing.push(resolved.display().to_string());
                }
            }
        };
        check(&self.cell.ocv_csv);
        check(&self.bess.inverter_csv);
        check(&self.scenario.intraday_csv);
        check(&self.scenario.imbalance_csv);
        for p in &self.data.frequency_csv {
            let resolved = Self::resolve(base, p);
            if !resolved.exists() {
                missing.push(resolved.display().to_string());
            }
        }
        if !missing.is_empty() {
            return Err(CoreError::Config(format!(
                "missing data files: {}",
                missing.join(", ")
            )));
        }
        if self.run.dt_s <= 0.0 {
            return Err(CoreError::Config("dt must be positive".into()));
        }
        if self.bess.e_rated_mwh <= 0.0 || self.bess.c_rate <= 0.0 {
            return Err(CoreError::Config(
                "rated energy and C-rate must be positive".into(),
            ));
        }
        if self.data.frequency_csv.is_empty() && !self.data.synthetic.enabled {
            return Err(CoreError::Config(
                "no frequency data: give CSVs or enable the synthetic generator".into(),
            ));
        }
        Ok(())
    }

    pub fn build_cell(&self) -> Result<CellParams<f64>> {
        let d = CellParams::default_nmc_18650();
        let s = &self.cell;
        let cell = CellParams {
            capacity_ah: s.capacity_ah.unwrap_or(d.capacity_ah),
            r0: s.r0_ohm.unwrap_or(d.r0),
            r1: s.r1_ohm.unwrap_or(d.r1),
            c1: s.c1_f.unwrap_or(d.c1),
            eta_coulomb: s.eta_coulomb.unwrap_or(d.eta_coulomb),
            v_nom: s.v_nom.unwrap_or(d.v_nom),
            v_cutoff_charge: s.v_cutoff_charge.unwrap_or(d.v_cutoff_charge),
            v_cutoff_discharge: s.v_cutoff_discharge.unwrap_or(d.v_cutoff_discharge),
            heat_capacity_j_per_k: s.heat_capacity_j_per_k.unwrap_or(d.heat_capacity_j_per_k),
            e_rated_wh: s.e_rated_wh.unwrap_or(d.e_rated_wh),
        };
        cell.validate()?;
        Ok(cell)
    }

    pub fn build_ocv(&self, base: &Path) -> Result<OcvCurve<f64>> {
        match &self.cell.ocv_csv {
            Some(p) => load_ocv_csv(&Self::resolve(base, p)),
            None => Ok(OcvCurve::default_nmc()),
        }
    }

    pub fn build_inverter(&self, base: &Path) -> Result<InverterCurve<f64>> {
        match &self.bess.inverter_csv {
            Some(p) => load_inverter_csv(&Self::resolve(base, p)),
            None => Ok(InverterCurve::default_commercial()),
        }
    }

    pub fn build_bess(&self, base: &Path) -> Result<BessConfig<f64>> {
        let mut bess = BessConfig::with_c_rate(
            self.build_cell()?,
            self.build_ocv(base)?,
            self.build_inverter(base)?,
            self.bess.e_rated_mwh * 1.0e6,
            self.bess.c_rate,
            self.run.dt_s,
        )?;
        if let Some(cop) = self.bess.cop {
            bess.cop = cop;
        }
        if let Some(t) = self.bess.t_ref_c {
            bess.t_ref_c = t;
        }
        if let Some(f) = self.bess.hvac_limit_frac {
            bess.hvac_p_limit_frac = f;
        }
        Ok(bess)
    }

    pub fn build_rules(&self, bess: &BessConfig<f64>) -> Result<MarketRules<f64>> {
        let mut rules = MarketRules::german(self.market.r_mw * 1.0e6, bess.p_max_w);
        if let Some(p) = self.market.p_rech_max_mw {
            rules.p_rech_max_w = p * 1.0e6;
        }
        rules.validate(bess.p_max_w)?;
        Ok(rules)
    }

    pub fn build_controller(&self) -> Result<ControllerParams<f64>> {
        let c = ControllerParams {
            k_p: self.controller.k_p,
            soc_0: self.controller.soc_0,
            o_d: self.controller.o_d,
            db_p: self.controller.db_p,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn build_ageing(&self) -> AgeingModel {
        let d = AgeingModel::default_placeholder();
        AgeingModel {
            alpha_cap: self.ageing.alpha_cap.clone().unwrap_or(d.alpha_cap),
            alpha_res: self.ageing.alpha_res.clone().unwrap_or(d.alpha_res),
            beta_cap: self.ageing.beta_cap.clone().unwrap_or(d.beta_cap),
            beta_res: self.ageing.beta_res.clone().unwrap_or(d.beta_res),
        }
    }

    pub fn build_scenario(&self, base: &Path) -> Result<MarketScenario> {
        let mut scenario = match self.scenario.fcr {
            FcrScenarioKind::Moderate => MarketScenario::moderate(),
            FcrScenarioKind::Low => MarketScenario::low(),
        };
        if !self.scenario.fcr_eur_per_mw_week.is_empty() {
            scenario.fcr_eur_per_mw_week = self.scenario.fcr_eur_per_mw_week.clone();
        }
        scenario.intraday = match &self.scenario.intraday_csv {
            Some(p) => crate::data::load_price_csv(&Self::resolve(base, p))?,
            None => PriceSeries::constant(self.scenario.intraday_eur_per_mwh),
        };
        scenario.imbalance = match &self.scenario.imbalance_csv {
            Some(p) => crate::data::load_price_csv(&Self::resolve(base, p))?,
            None => PriceSeries::constant(self.scenario.imbalance_eur_per_mwh),
        };
        if let Some(levies) = &self.scenario.levies {
            scenario.levies = levies.clone();
        } else {
            scenario.levies = german_default_levies();
        }
        scenario.inflation = self.scenario.inflation;
        scenario.discount_rate = self.scenario.discount_rate;
        Ok(scenario)
    }

    pub fn build_optimizer(&self) -> Result<OptimizerConfig> {
        let d = OptimizerConfig::default();
        let s = &self.optimizer;
        let mut bounds = ParamBox::default_controller_box();
        if let Some([lo, hi]) = s.k_p {
            bounds.lo[0] = lo;
            bounds.hi[0] = hi;
        }
        if let Some([lo, hi]) = s.soc_0 {
            bounds.lo[1] = lo;
            bounds.hi[1] = hi;
        }
        if let Some([lo, hi]) = s.o_d {
            bounds.lo[2] = lo;
            bounds.hi[2] = hi;
        }
        if let Some([lo, hi]) = s.db_p {
            bounds.lo[3] = lo;
            bounds.hi[3] = hi;
        }
        let cfg = OptimizerConfig {
            eps_req: s.eps_req.unwrap_or(d.eps_req),
            beta_conf: s.beta_conf.unwrap_or(d.beta_conf),
            n_c: s.n_c.unwrap_or(d.n_c),
            n_c_prime: s.n_c_prime.unwrap_or(d.n_c_prime),
            n_days: s.n_days.unwrap_or(d.n_days),
            n_check_init: s.n_check_init.unwrap_or(d.n_check_init),
            population: s.population.unwrap_or(d.population),
            stop_std_frac: s.stop_std_frac.unwrap_or(d.stop_std_frac),
            de_mutation_f: s.de_mutation_f.unwrap_or(d.de_mutation_f),
            de_crossover: s.de_crossover.unwrap_or(d.de_crossover),
            max_iterations: s.max_iterations.unwrap_or(d.max_iterations),
            c_penalty_eur: s.c_penalty_eur,
            c_cell_eur_per_kwh: s.c_cell_eur_per_kwh.unwrap_or(d.c_cell_eur_per_kwh),
            bounds,
            max_years: s.max_years.unwrap_or(d.max_years),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load or synthesise the frequency pool.
    pub fn build_pool(&self, base: &Path) -> Result<SamplePool> {
        if !self.data.frequency_csv.is_empty() {
            let traces: Vec<FrequencyTrace> = self
                .data
                .frequency_csv
                .iter()
                .map(|p| {
                    load_frequency_csv_mapped(
                        &Self::resolve(base, p),
                        self.run.dt_s,
                        &self.data.columns,
                    )
                })
                .collect::<Result<_>>()?;
            return SamplePool::new(traces);
        }
        let s = &self.data.synthetic;
        let params = SynthFrequencyParams {
            std_hz: s.std_hz,
            correlation_time_s: s.correlation_time_s,
            clamp_hz: s.clamp_hz,
            excursions_per_day: s.excursions_per_day,
            excursion_level_hz: s.excursion_level_hz,
            excursion_duration_s: s.excursion_duration_s,
        };
        let traces: Vec<FrequencyTrace> = (0..s.traces.max(1))
            .map(|i| {
                let mut rng = derive_rng(self.run.seed, stream_tag(0, i as u32, 0));
                FrequencyTrace {
                    start_epoch_s: None,
                    dt_s: self.run.dt_s,
                    values: synth_frequency(&params, s.days * 86_400.0, self.run.dt_s, &mut rng),
                }
            })
            .collect();
        SamplePool::new(traces)
    }

    pub fn build_sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            energies_wh: self.sweep.energies_mwh.iter().map(|e| e * 1.0e6).collect(),
            c_rates: self.sweep.c_rates.clone(),
            cost_eur_per_kwh: self.sweep.cost_eur_per_kwh.clone(),
            r_w: self.market.r_mw * 1.0e6,
        }
    }
}
