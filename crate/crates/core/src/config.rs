//! Experiment configuration as a flat `key=value` bundle.
//!
//! Two column files accompany the bundle: the 24-line arrival profile and
//! the 288-line load shape. Paths inside a bundle are resolved relative to
//! the bundle's directory. [`ExperimentConfig::render`] writes every value
//! back out, defaults included, so a run can be reproduced from its output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::policies::{FdfsOrder, PolicyKind, PolicySpec};
use crate::powergrid::{ChargerSpec, LoadShape, RangeRating};
use crate::workload::{ArrivalProfile, WorkloadConfig};
use crate::{Error, Result};

/// Everything that defines a cell except the policy, SDR and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub workload: WorkloadConfig,
    pub profile: ArrivalProfile,
    pub shape: LoadShape,
    pub peak_other_fraction: f64,
    pub charger: ChargerSpec,
    pub warmup_days: u32,
    pub last_measured_day: u32,
    pub bin_width_min: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            workload: WorkloadConfig::default(),
            profile: ArrivalProfile::default_evening(1500.0),
            shape: LoadShape::default_residential(),
            peak_other_fraction: 0.8,
            charger: ChargerSpec::home_110_15(),
            warmup_days: 4,
            last_measured_day: 13,
            bin_width_min: 30.0,
        }
    }
}

/// The default SDR grid: steps of 0.05 up to 1.2, 0.2 up to 2, then 3.
pub const DEFAULT_SDR_GRID: [f64; 10] = [1.0, 1.05, 1.1, 1.15, 1.2, 1.4, 1.6, 1.8, 2.0, 3.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub policies: Vec<PolicyKind>,
    /// Run FCFS and RR without trip distances.
    pub simple: bool,
    pub fdfs_order: FdfsOrder,
    pub sdr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub trace: bool,
    charger_preset: String,
    derate_13a: bool,
    charger_override: Option<(Option<f64>, Option<f64>)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            policies: PolicyKind::ALL.to_vec(),
            simple: false,
            fdfs_order: FdfsOrder::EarliestDeparture,
            sdr_grid: DEFAULT_SDR_GRID.to_vec(),
            seeds: vec![1, 2, 3],
            trace: false,
            charger_preset: "home-110-15".into(),
            derate_13a: false,
            charger_override: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::config(format!(
            "{key}: expected true/false, got {other:?}"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

/// Parses a policy list; `all` expands to the five policies.
pub fn parse_policies(value: &str) -> Result<Vec<PolicyKind>> {
    if value.trim() == "all" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    let kinds = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<PolicyKind>>>()?;
    if kinds.is_empty() {
        return Err(Error::config("at least one policy is required"));
    }
    Ok(kinds)
}

impl ExperimentConfig {
    /// Reads a bundle, applying its values over the defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.apply_text(&text, base)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, base_dir: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim(), base_dir)
                .map_err(|e| match e {
                    Error::Config(message) => Error::Parse {
                        line: i + 1,
                        message,
                    },
                    other => other,
                })?;
        }
        Ok(())
    }

    /// Sets one key. File-valued keys are resolved against `base_dir`.
    pub fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<()> {
        let w = &mut self.scenario.workload;
        match key {
            "days" => w.days = parse_num(key, value)?,
            "warmup_days" => self.scenario.warmup_days = parse_num(key, value)?,
            "last_measured_day" => self.scenario.last_measured_day = parse_num(key, value)?,
            "arrivals_per_day" => {
                self.scenario.profile.expected_daily_arrivals = parse_num(key, value)?
            }
            "duration_mean_h" => w.duration_mean_h = parse_num(key, value)?,
            "duration_std_h" => w.duration_std_h = parse_num(key, value)?,
            "duration_min_h" => w.duration_min_h = parse_num(key, value)?,
            "duration_max_h" => w.duration_max_h = parse_num(key, value)?,
            "one_way_commute_mean_mi" => w.one_way_commute_mean_mi = parse_num(key, value)?,
            "commute_cap_mi" => w.commute_cap_mi = parse_num(key, value)?,
            "extra_daily_mi" => w.extra_daily_mi = parse_num(key, value)?,
            "emergency_mi" => w.emergency_mi = parse_num(key, value)?,
            "initial_charge_max_mi" => w.initial_charge_max_mi = parse_num(key, value)?,
            "battery_capacity_miles" => w.battery_capacity_miles = parse_num(key, value)?,
            "peak_other_fraction" => self.scenario.peak_other_fraction = parse_num(key, value)?,
            "bin_width_min" => self.scenario.bin_width_min = parse_num(key, value)?,
            "charger" => {
                self.charger_preset = value.to_string();
                self.charger_override = None;
                self.rebuild_charger()?;
            }
            "derate_13a" => {
                self.derate_13a = parse_bool(key, value)?;
                self.rebuild_charger()?;
            }
            "charger_volts" | "charger_amps" => {
                let v: f64 = parse_num(key, value)?;
                let (volts, amps) = self.charger_override.get_or_insert((None, None));
                if key == "charger_volts" {
                    *volts = Some(v);
                } else {
                    *amps = Some(v);
                }
                self.rebuild_charger()?;
            }
            "charger_rating" => {
                self.scenario.charger.rating = match value {
                    "nominal" => RangeRating::Nominal,
                    "physical" => RangeRating::Physical,
                    other => {
                        return Err(Error::config(format!(
                            "charger_rating: expected nominal or physical, got {other:?}"
                        )))
                    }
                };
                self.rebuild_charger()?;
            }
            "policies" => self.policies = parse_policies(value)?,
            "simple" => self.simple = parse_bool(key, value)?,
            "fdfs_order" => {
                self.fdfs_order = match value {
                    "earliest-departure" => FdfsOrder::EarliestDeparture,
                    "least-slack" => FdfsOrder::LeastSlack,
                    other => {
                        return Err(Error::config(format!(
                            "fdfs_order: expected earliest-departure or least-slack, got {other:?}"
                        )))
                    }
                }
            }
            "sdr_grid" => self.sdr_grid = parse_list(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "trace" => self.trace = parse_bool(key, value)?,
            "arrival_profile" => {
                let text = read_column_file(&base_dir.join(value))?;
                let daily = self.scenario.profile.expected_daily_arrivals;
                self.scenario.profile = ArrivalProfile::parse(&text, daily)?;
            }
            "load_shape" => {
                let text = read_column_file(&base_dir.join(value))?;
                self.scenario.shape = LoadShape::parse(&text)?;
            }
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn rebuild_charger(&mut self) -> Result<()> {
        let rating = self.scenario.charger.rating;
        let mut charger = ChargerSpec::preset(&self.charger_preset, rating, self.derate_13a)?;
        if let Some((volts, amps)) = self.charger_override {
            charger = ChargerSpec::new(
                volts.unwrap_or(charger.volts),
                amps.unwrap_or(charger.amps),
                rating,
            )?;
        }
        self.scenario.charger = charger;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.workload.validate()?;
        if self.policies.is_empty() {
            return Err(Error::config("at least one policy is required"));
        }
        if self.sdr_grid.is_empty() {
            return Err(Error::config("SDR grid is empty"));
        }
        if let Some(sdr) = self.sdr_grid.iter().find(|s| !(**s >= 1.0)) {
            return Err(Error::InsufficientSupply(*sdr));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        let s = &self.scenario;
        if !(s.warmup_days < s.last_measured_day && s.last_measured_day < s.workload.days) {
            return Err(Error::config(format!(
                "need warmup_days < last_measured_day < days, got {} / {} / {}",
                s.warmup_days, s.last_measured_day, s.workload.days
            )));
        }
        if !(s.bin_width_min > 0.0) {
            return Err(Error::InvalidBinWidth(s.bin_width_min));
        }
        if !(s.peak_other_fraction > 0.0 && s.peak_other_fraction < 1.0) {
            return Err(Error::config("peak_other_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Concrete policy variants to run, in configured order.
    pub fn policy_specs(&self) -> Vec<PolicySpec> {
        self.policies
            .iter()
            .map(|&kind| {
                let mut spec = PolicySpec::new(kind).with_fdfs_order(self.fdfs_order);
                if self.simple && kind.supports_simple() {
                    spec.use_distance_info = false;
                }
                spec
            })
            .collect()
    }

    /// Full `key=value` listing. The two column files are referenced by the
    /// given names and must be written next to the rendered bundle.
    pub fn render(&self, profile_file: &str, shape_file: &str) -> String {
        let s = &self.scenario;
        let w = &s.workload;
        let join = |v: Vec<String>| v.join(",");
        let lines = [
            ("days", w.days.to_string()),
            ("warmup_days", s.warmup_days.to_string()),
            ("last_measured_day", s.last_measured_day.to_string()),
            (
                "arrivals_per_day",
                s.profile.expected_daily_arrivals.to_string(),
            ),
            ("duration_mean_h", w.duration_mean_h.to_string()),
            ("duration_std_h", w.duration_std_h.to_string()),
            ("duration_min_h", w.duration_min_h.to_string()),
            ("duration_max_h", w.duration_max_h.to_string()),
            (
                "one_way_commute_mean_mi",
                w.one_way_commute_mean_mi.to_string(),
            ),
            ("commute_cap_mi", w.commute_cap_mi.to_string()),
            ("extra_daily_mi", w.extra_daily_mi.to_string()),
            ("emergency_mi", w.emergency_mi.to_string()),
            ("initial_charge_max_mi", w.initial_charge_max_mi.to_string()),
            (
                "battery_capacity_miles",
                w.battery_capacity_miles.to_string(),
            ),
            ("peak_other_fraction", s.peak_other_fraction.to_string()),
            (
                "charger_rating",
                match s.charger.rating {
                    RangeRating::Nominal => "nominal".into(),
                    RangeRating::Physical => "physical".into(),
                },
            ),
            ("charger_volts", s.charger.volts.to_string()),
            ("charger_amps", s.charger.amps.to_string()),
            ("bin_width_min", s.bin_width_min.to_string()),
            (
                "policies",
                join(self.policies.iter().map(|p| p.name().to_string()).collect()),
            ),
            ("simple", self.simple.to_string()),
            (
                "fdfs_order",
                match self.fdfs_order {
                    FdfsOrder::EarliestDeparture => "earliest-departure".into(),
                    FdfsOrder::LeastSlack => "least-slack".into(),
                },
            ),
            (
                "sdr_grid",
                join(self.sdr_grid.iter().map(f64::to_string).collect()),
            ),
            (
                "seeds",
                join(self.seeds.iter().map(u64::to_string).collect()),
            ),
            ("trace", self.trace.to_string()),
            ("arrival_profile", profile_file.to_string()),
            ("load_shape", shape_file.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

fn read_column_file(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.policy_specs().len(), 5);
        assert_eq!(cfg.sdr_grid.len(), 10);
    }

    #[test]
    fn keys_apply_and_errors_carry_line_numbers() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(
            "# comment\ndays=20\nseeds=4, 5\npolicies=fcfs,rr\nsimple=true\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.scenario.workload.days, 20);
        assert_eq!(cfg.seeds, vec![4, 5]);
        let specs = cfg.policy_specs();
        assert!(specs.iter().all(|s| !s.use_distance_info));

        let err = cfg
            .apply_text("days=3\nbogus=1\n", Path::new("."))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = cfg
            .apply_text("no equals sign\n", Path::new("."))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn charger_keys() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("charger", "dryer-220-30", Path::new(".")).unwrap();
        assert_eq!(cfg.scenario.charger.miles_per_slot, 2.0);
        cfg.set("charger", "home-110-15", Path::new(".")).unwrap();
        cfg.set("derate_13a", "true", Path::new(".")).unwrap();
        assert_eq!(cfg.scenario.charger.amps, 13.0);
        cfg.set("charger_rating", "physical", Path::new("."))
            .unwrap();
        assert_eq!(cfg.scenario.charger.rating, RangeRating::Physical);
        assert!(cfg.set("charger", "tesla", Path::new(".")).is_err());
    }

    #[test]
    fn low_sdr_is_a_config_error() {
        let cfg = ExperimentConfig {
            sdr_grid: vec![0.9],
            ..ExperimentConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("grow indefinitely"));
    }

    #[test]
    fn render_then_load_reproduces_config() {
        let dir = std::env::temp_dir().join(format!("gridshare-config-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.set("charger", "dryer-220-30", &dir).unwrap();
        cfg.set("one_way_commute_mean_mi", "11.25", &dir).unwrap();
        cfg.set("seeds", "7", &dir).unwrap();
        cfg.set("fdfs_order", "least-slack", &dir).unwrap();
        fs::write(dir.join("profile.txt"), cfg.scenario.profile.to_text()).unwrap();
        fs::write(dir.join("shape.txt"), cfg.scenario.shape.to_text()).unwrap();
        fs::write(
            dir.join("resolved-config"),
            cfg.render("profile.txt", "shape.txt"),
        )
        .unwrap();

        let loaded = ExperimentConfig::load(&dir.join("resolved-config")).unwrap();
        assert_eq!(loaded.scenario, cfg.scenario);
        assert_eq!(loaded.policy_specs(), cfg.policy_specs());
        assert_eq!(loaded.seeds, cfg.seeds);
        assert_eq!(loaded.sdr_grid, cfg.sdr_grid);
        fs::remove_dir_all(&dir).ok();
    }
}
