//! Monte-Carlo sweeps over scenario parameters and their CSV output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{optimize_cellular, optimize_dualpol_ios, optimize_dualpol_ris, optimize_power_domain};
use crate::channel::{synthesize_channels, ChannelSet};
use crate::error::{Error, Result};
use crate::scenario::{build_geometry, Geometry, ScenarioConfig};
use crate::wmmse::{Solution, SurfaceState, WmmseOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DualpolIos,
    PowerDomainIos,
    DualpolRis,
    Cellular,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::DualpolIos,
        Scheme::PowerDomainIos,
        Scheme::DualpolRis,
        Scheme::Cellular,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scheme::DualpolIos => "dualpol_ios",
            Scheme::PowerDomainIos => "power_domain_ios",
            Scheme::DualpolRis => "dualpol_ris",
            Scheme::Cellular => "cellular",
        }
    }

    /// Runs this scheme on one channel draw.
    pub fn optimize(
        self,
        config: &ScenarioConfig,
        geometry: &Geometry,
        channels: &ChannelSet<f64>,
        options: &WmmseOptions,
    ) -> Result<Solution<f64>> {
        match self {
            Scheme::DualpolIos => optimize_dualpol_ios(config, geometry, channels, options),
            Scheme::PowerDomainIos => {
                optimize_power_domain(config, geometry, channels, config.power_domain.epsilon, options)
            }
            Scheme::DualpolRis => optimize_dualpol_ris(config, geometry, channels, options),
            Scheme::Cellular => optimize_cellular(config, channels, options),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.id() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }
}

/// Swept scenario parameter. `Base` runs the configuration unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// `K_r / (K_r + K_t)` with the total user count fixed.
    UserRatio,
    XpdBi,
    /// Transmit power budget in W.
    Power,
    Base,
}

impl SweepParam {
    pub fn id(self) -> &'static str {
        match self {
            SweepParam::UserRatio => "user_ratio",
            SweepParam::XpdBi => "xpd_bi",
            SweepParam::Power => "power",
            SweepParam::Base => "base",
        }
    }

    /// Copy of `base` with the parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let bad = || Err(Error::InvalidConfig(format!("{} value {value} out of range", self.id())));
        let config = match self {
            SweepParam::UserRatio => {
                if !(0.0..=1.0).contains(&value) {
                    return bad();
                }
                let total = base.n_users();
                let k_r = (value * total as f64).round() as usize;
                base.with_user_split(k_r, total - k_r)
            }
            SweepParam::XpdBi => {
                if !(0.0..=1.0).contains(&value) {
                    return bad();
                }
                ScenarioConfig {
                    beta_bi: value,
                    ..base.clone()
                }
            }
            SweepParam::Power => {
                if !(value > 0.0 && value.is_finite()) {
                    return bad();
                }
                ScenarioConfig {
                    p_bs: value,
                    ..base.clone()
                }
            }
            SweepParam::Base => base.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::UserRatio, SweepParam::XpdBi, SweepParam::Power, SweepParam::Base]
            .into_iter()
            .find(|x| x.id() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep parameter `{s}`")))
    }
}

/// How trial seeds relate across sweep points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Seed depends on the base seed, the value index and the trial index.
    #[default]
    PerPoint,
    /// Seed depends only on the base seed and the trial index, so trial `t`
    /// sees the same random draws at every sweep value.
    Paired,
}

pub const DEFAULT_TRIALS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub base: ScenarioConfig,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
    #[serde(default)]
    pub options: WmmseOptions,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>, base: ScenarioConfig) -> Self {
        Self {
            param,
            values,
            trials: DEFAULT_TRIALS,
            schemes: Scheme::ALL.to_vec(),
            base,
            seed_policy: SeedPolicy::default(),
            options: WmmseOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("no schemes selected".into()));
        }
        self.base.validate()?;
        for &v in &self.values {
            self.param.apply(&self.base, v)?;
        }
        Ok(())
    }

    pub fn trial_seed(&self, value_index: usize, trial: usize) -> u64 {
        match self.seed_policy {
            SeedPolicy::PerPoint => derive_seed(self.base.seed, value_index as u64, trial as u64),
            SeedPolicy::Paired => derive_seed(self.base.seed, u64::MAX, trial as u64),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed for one `(value, trial)` cell.
pub fn derive_seed(base: u64, value_index: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ value_index) ^ trial)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub sum_rate: f64,
    pub iterations: usize,
    pub converged: bool,
    pub p_v: f64,
    pub p_h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub param: SweepParam,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    /// `None` when the solver failed; see `error`.
    pub outcome: Option<Outcome>,
    pub epsilon: Option<f64>,
    pub error: Option<String>,
    pub surface: Option<SurfaceState>,
}

fn run_cell(spec: &SweepSpec, value_index: usize, trial: usize) -> Vec<ResultRow> {
    let value = spec.values[value_index];
    let seed = spec.trial_seed(value_index, trial);
    let row = |scheme: Scheme, result: Result<Solution<f64>>, epsilon: Option<f64>| {
        let mut row = ResultRow {
            scheme,
            param: spec.param,
            value,
            trial,
            seed,
            outcome: None,
            epsilon,
            error: None,
            surface: None,
        };
        match result {
            Ok(sol) => {
                let (p_v, p_h) = sol.polarization_power();
                row.outcome = Some(Outcome {
                    sum_rate: sol.sum_rate,
                    iterations: sol.iterations(),
                    converged: sol.converged(),
                    p_v,
                    p_h,
                });
                row.surface = Some(sol.surface);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    };
    let prepared = spec.param.apply(&spec.base, value).and_then(|mut config| {
        config.seed = seed;
        let geometry = build_geometry(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = synthesize_channels::<f64, _>(&config, &geometry, &mut rng)?;
        Ok((config, geometry, channels))
    });
    let (config, geometry, channels) = match prepared {
        Ok(p) => p,
        Err(e) => {
            let message = e.to_string();
            return spec
                .schemes
                .iter()
                .map(|&s| row(s, Err(Error::InvalidConfig(message.clone())), None))
                .collect();
        }
    };
    let checksum = channels.checksum();
    spec.schemes
        .iter()
        .map(|&scheme| {
            let result = scheme.optimize(&config, &geometry, &channels, &spec.options);
            debug_assert_eq!(channels.checksum(), checksum);
            let epsilon = (scheme == Scheme::PowerDomainIos).then_some(config.power_domain.epsilon);
            row(scheme, result, epsilon)
        })
        .collect()
}

/// Runs every `(value, trial, scheme)` cell. Channels are drawn once per
/// `(value, trial)` and shared by all schemes. Rows come back in
/// `(value, trial, scheme)` order whatever the thread schedule.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.trials).map(move |t| (v, t)))
        .collect();
    let rows: Vec<Vec<ResultRow>> = cells.par_iter().map(|&(v, t)| run_cell(spec, v, t)).collect();
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub param: SweepParam,
    pub value: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    /// Rows dropped because the solver failed.
    #[serde(skip)]
    pub excluded: usize,
}

/// Mean and standard error `s / sqrt(n)` per `(scheme, value)`, excluding
/// failed rows. A single sample has standard error 0.
pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    // Group keys in order of first appearance.
    let mut order: Vec<(Scheme, SweepParam, u64)> = Vec::new();
    let mut groups: BTreeMap<(Scheme, u64), (Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.scheme, r.value.to_bits());
        let entry = groups.entry(key).or_insert_with(|| {
            order.push((r.scheme, r.param, r.value.to_bits()));
            (Vec::new(), 0)
        });
        match &r.outcome {
            Some(o) => entry.0.push(o.sum_rate),
            None => entry.1 += 1,
        }
    }
    order
        .into_iter()
        .map(|(scheme, param, bits)| {
            let (samples, excluded) = &groups[&(scheme, bits)];
            let value = f64::from_bits(bits);
            let (mean, stderr) = mean_stderr(samples).ok_or_else(|| Error::EmptyGroup {
                scheme: scheme.id().into(),
                param: param.id().into(),
                value,
            })?;
            Ok(SummaryRow {
                scheme,
                param,
                value,
                mean,
                stderr,
                n: samples.len(),
                excluded: *excluded,
            })
        })
        .collect()
}

/// `(mean, s / sqrt(n))`; `None` for no samples.
pub fn mean_stderr(samples: &[f64]) -> Option<(f64, f64)> {
    let n = samples.len();
    if n == 0 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvResult {
    pub scheme: String,
    pub param: String,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub sum_rate: Option<f64>,
    pub iterations: Option<usize>,
    /// `true`, `false` or `error`.
    pub converged: String,
    pub p_v: Option<f64>,
    pub p_h: Option<f64>,
    pub epsilon: Option<f64>,
}

impl From<&ResultRow> for CsvResult {
    fn from(r: &ResultRow) -> Self {
        let o = r.outcome.as_ref();
        Self {
            scheme: r.scheme.id().into(),
            param: r.param.id().into(),
            value: r.value,
            trial: r.trial,
            seed: r.seed,
            sum_rate: o.map(|o| o.sum_rate),
            iterations: o.map(|o| o.iterations),
            converged: o.map_or("error".into(), |o| o.converged.to_string()),
            p_v: o.map(|o| o.p_v),
            p_h: o.map(|o| o.p_h),
            epsilon: r.epsilon,
        }
    }
}

pub const RESULTS_HEADER: &str = "scheme,param,value,trial,seed,sum_rate,iterations,converged,p_v,p_h,epsilon";
pub const SUMMARY_HEADER: &str = "scheme,param,value,mean,stderr,n";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv<S: Serialize>(path: &Path, header: &str, records: impl Iterator<Item = S>) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(file, "{header}").map_err(io_err(path))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for r in records {
        writer.serialize(r).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_csv(path, RESULTS_HEADER, rows.iter().map(CsvResult::from))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<CsvResult>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<CsvResult>, _>>()
        .map_err(csv_err(path))
}

#[derive(Serialize)]
struct CsvSummary<'a> {
    scheme: &'a str,
    param: &'a str,
    value: f64,
    mean: f64,
    stderr: f64,
    n: usize,
}

pub fn write_summary_csv(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    write_csv(
        path,
        SUMMARY_HEADER,
        summary.iter().map(|s| CsvSummary {
            scheme: s.scheme.id(),
            param: s.param.id(),
            value: s.value,
            mean: s.mean,
            stderr: s.stderr,
            n: s.n,
        }),
    )
}

/// Whitespace-separated table: the swept value, then the mean rate of each
/// scheme in column order. Missing cells are written as `nan`.
pub fn write_plot_data(path: &Path, param: SweepParam, summary: &[SummaryRow]) -> Result<()> {
    let mut schemes: Vec<Scheme> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for s in summary {
        if !schemes.contains(&s.scheme) {
            schemes.push(s.scheme);
        }
        if !values.iter().any(|v| v.to_bits() == s.value.to_bits()) {
            values.push(s.value);
        }
    }
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut header = format!("# {}", param.id());
    for s in &schemes {
        header.push(' ');
        header.push_str(s.id());
    }
    writeln!(file, "{header}").map_err(io_err(path))?;
    for v in values {
        let mut line = format!("{v}");
        for scheme in &schemes {
            let mean = summary
                .iter()
                .find(|s| s.scheme == *scheme && s.value.to_bits() == v.to_bits())
                .map_or(f64::NAN, |s| s.mean);
            line.push_str(&format!(" {mean}"));
        }
        writeln!(file, "{line}").map_err(io_err(path))?;
    }
    file.flush().map_err(io_err(path))?;
    Ok(())
}

/// Paths written by [`emit`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmittedFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

/// Writes `results.csv`, `summary.csv` and `plot_<param>.dat` into `dir`.
pub fn emit(rows: &[ResultRow], summary: &[SummaryRow], param: SweepParam, dir: &Path) -> Result<EmittedFiles> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = EmittedFiles {
        results: dir.join("results.csv"),
        summary: dir.join("summary.csv"),
        plot: dir.join(format!("plot_{}.dat", param.id())),
    };
    write_results_csv(&files.results, rows)?;
    write_summary_csv(&files.summary, summary)?;
    write_plot_data(&files.plot, param, summary)?;
    Ok(files)
}

/// Writes every row, including the final surface state (phase indices and
/// amplitudes), as a JSON array.
pub fn write_results_json(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(file, rows)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: Scheme, value: f64, trial: usize, rate: Option<f64>) -> ResultRow {
        ResultRow {
            scheme,
            param: SweepParam::Power,
            value,
            trial,
            seed: 7,
            outcome: rate.map(|sum_rate| Outcome {
                sum_rate,
                iterations: 3,
                converged: true,
                p_v: 0.5,
                p_h: 0.5,
            }),
            epsilon: None,
            error: rate.is_none().then(|| "failed".into()),
            surface: None,
        }
    }

    #[test]
    fn ids_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.id().parse::<Scheme>().unwrap(), s);
        }
        assert!("cellular_only".parse::<Scheme>().is_err());
        assert_eq!("xpd_bi".parse::<SweepParam>().unwrap(), SweepParam::XpdBi);
    }

    #[test]
    fn user_ratio_rounds_to_integer_split() {
        let base = ScenarioConfig::default();
        let expected = [(0.2, 1), (0.35, 1), (0.5, 2), (0.65, 3), (0.8, 3)];
        for (ratio, k_r) in expected {
            let c = SweepParam::UserRatio.apply(&base, ratio).unwrap();
            assert_eq!((c.k_r, c.k_t), (k_r, 4 - k_r), "ratio {ratio}");
        }
        assert!(SweepParam::UserRatio.apply(&base, 1.5).is_err());
        assert!(SweepParam::Power.apply(&base, 0.0).is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let spec = SweepSpec::new(SweepParam::Power, vec![1.0, 2.0], ScenarioConfig::default());
        assert_ne!(spec.trial_seed(0, 0), spec.trial_seed(1, 0));
        assert_ne!(spec.trial_seed(0, 0), spec.trial_seed(0, 1));
        assert_eq!(spec.trial_seed(1, 3), derive_seed(1, 1, 3));
        let paired = SweepSpec {
            seed_policy: SeedPolicy::Paired,
            ..spec
        };
        assert_eq!(paired.trial_seed(0, 4), paired.trial_seed(1, 4));
    }

    #[test]
    fn aggregation() {
        let rows = vec![
            row(Scheme::Cellular, 1.0, 0, Some(1.0)),
            row(Scheme::Cellular, 1.0, 1, Some(2.0)),
            row(Scheme::Cellular, 1.0, 2, Some(3.0)),
            row(Scheme::Cellular, 2.0, 0, Some(4.0)),
            row(Scheme::Cellular, 2.0, 1, None),
        ];
        let s = aggregate(&rows).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0].mean - 2.0).abs() < 1e-15);
        assert!((s[0].stderr - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[0].n, 3);
        assert_eq!((s[1].mean, s[1].stderr, s[1].n, s[1].excluded), (4.0, 0.0, 1, 1));
    }

    #[test]
    fn identical_rows_have_zero_stderr() {
        let rows = vec![row(Scheme::Cellular, 1.0, 0, Some(2.5)), row(Scheme::Cellular, 1.0, 1, Some(2.5))];
        assert_eq!(aggregate(&rows).unwrap()[0].stderr, 0.0);
    }

    #[test]
    fn all_failed_group_is_an_error() {
        let rows = vec![row(Scheme::Cellular, 1.0, 0, None)];
        assert!(matches!(aggregate(&rows), Err(Error::EmptyGroup { .. })));
    }

    #[test]
    fn empty_rows_give_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit(&[], &[], SweepParam::UserRatio, dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(&files.results).unwrap(), format!("{RESULTS_HEADER}\n"));
        assert_eq!(std::fs::read_to_string(&files.summary).unwrap(), format!("{SUMMARY_HEADER}\n"));
        assert_eq!(std::fs::read_to_string(&files.plot).unwrap().lines().count(), 1);
    }

    #[test]
    fn results_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = vec![row(Scheme::PowerDomainIos, 0.5, 2, Some(3.25)), row(Scheme::Cellular, 0.5, 2, None)];
        rows[0].epsilon = Some(1.0);
        let path = dir.path().join("results.csv");
        write_results_csv(&path, &rows).unwrap();
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], CsvResult::from(&rows[0]));
        assert_eq!(back[1].converged, "error");
        assert_eq!(back[1].sum_rate, None);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("cellular,power,0.5,2,7,,,error,,,"));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let base = ScenarioConfig::default();
        let mut spec = SweepSpec::new(SweepParam::XpdBi, vec![], base.clone());
        assert!(spec.validate().is_err());
        spec.values = vec![0.1];
        spec.trials = 0;
        assert!(spec.validate().is_err());
        spec.trials = 1;
        spec.values = vec![2.0];
        assert!(spec.validate().is_err());
    }
}
