use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use crate::attacks::{eps_sweep, hlc_report, hlc_sweep, tul_train_eval, utility_auc, HlcReport, TulReport, SUMMARY_EPS};
use crate::baselines::{apply_noise, tka_tracks, Mechanism};
use crate::catcrt::Critic;
use crate::catgen::Generator;
use crate::kama::kama_pipeline;
use crate::metrics::{compare, dataset_od, default_regions, summarize, ssim_summary, user_entropy_table, Comparison, DatasetSummary, SsimSummary};
use crate::mobility::io::{read_csv, read_matrices, render_csv, write_matrices};
use crate::mobility::{aggregate_user, Dataset, MobilityMatrix};
use crate::nn::ModelParams;
use crate::provenance::provenance_line;
use crate::train::{evaluate_checkpoint, split_users, train, UserData};
use crate::{Error, Result};

use super::config::{PipelineConfig, COLUMNS};
use super::plot::{heatmap_png, line_chart_png};
use super::world::generate_world;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Aggregate,
    Kama,
    Train,
    Generate,
    Evaluate,
    Attack,
    Utility,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Aggregate,
        Stage::Kama,
        Stage::Train,
        Stage::Generate,
        Stage::Evaluate,
        Stage::Attack,
        Stage::Utility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Aggregate => "aggregate",
            Stage::Kama => "kama",
            Stage::Train => "train",
            Stage::Generate => "generate",
            Stage::Evaluate => "evaluate",
            Stage::Attack => "attack",
            Stage::Utility => "utility",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown stage '{s}'")))
    }
}

/// File locations inside a pipeline directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn raw(&self) -> PathBuf {
        self.root.join("raw.csv")
    }
    pub fn matrices(&self) -> PathBuf {
        self.root.join("matrices.stmm")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.csv")
    }
    pub fn kama(&self) -> PathBuf {
        self.root.join("kama.stmm")
    }
    pub fn kama_clusters(&self) -> PathBuf {
        self.root.join("kama_clusters.csv")
    }
    pub fn generator(&self) -> PathBuf {
        self.root.join("generator.ckpt")
    }
    pub fn critic(&self) -> PathBuf {
        self.root.join("critic.ckpt")
    }
    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.csv")
    }
    pub fn data(&self, name: &str) -> PathBuf {
        self.root.join("data").join(format!("{name}.csv"))
    }
    pub fn report(&self, file: &str) -> PathBuf {
        self.root.join("reports").join(file)
    }
    fn marker(&self, stage: Stage) -> PathBuf {
        self.root.join(".done").join(stage.name())
    }
    fn lock(&self) -> PathBuf {
        self.root.join(".lock")
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        p.into()
    }

    /// Files a stage is expected to leave behind.
    pub fn outputs(&self, stage: Stage, cfg: &PipelineConfig) -> Vec<PathBuf> {
        match stage {
            Stage::Aggregate => vec![self.raw(), self.matrices(), Self::sidecar(&self.matrices()), self.split()],
            Stage::Kama => vec![self.kama(), Self::sidecar(&self.kama()), self.kama_clusters()],
            Stage::Train => {
                let mut v = vec![self.generator(), Self::sidecar(&self.generator()), self.train_log()];
                if cfg.checkpoint.is_none() {
                    v.extend([self.critic(), Self::sidecar(&self.critic())]);
                }
                v
            }
            Stage::Generate => columns(cfg)[1..].iter().map(|c| self.data(c)).collect(),
            Stage::Evaluate => {
                let mut v: Vec<PathBuf> = EVALUATE_REPORTS.iter().map(|f| self.report(f)).collect();
                v.extend(columns(cfg).iter().map(|c| self.report(&format!("od_{c}.png"))));
                v
            }
            Stage::Attack => ATTACK_REPORTS.iter().map(|f| self.report(f)).collect(),
            Stage::Utility => UTILITY_REPORTS.iter().map(|f| self.report(f)).collect(),
        }
    }

    /// Every deterministic output, relative to the root, sorted.
    pub fn bundle(&self, cfg: &PipelineConfig) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = Stage::ALL
            .iter()
            .flat_map(|&s| self.outputs(s, cfg))
            .map(|p| p.strip_prefix(&self.root).expect("inside root").to_path_buf())
            .collect();
        v.sort();
        v
    }
}

const EVALUATE_REPORTS: [&str; 6] = [
    "collective.csv",
    "individual.csv",
    "hourly.csv",
    "ssim.csv",
    "entropy.csv",
    "hourly_w2.png",
];
const ATTACK_REPORTS: [&str; 3] = ["tul.csv", "hlc.csv", "hlc_sweep.csv"];
const UTILITY_REPORTS: [&str; 2] = ["fm_auc.csv", "roc.csv"];

/// Dataset columns this configuration produces, in report order.
pub fn columns(cfg: &PipelineConfig) -> Vec<&'static str> {
    COLUMNS
        .iter()
        .copied()
        .filter(|&c| c == "raw" || cfg.mechanisms.iter().any(|m| m == c))
        .collect()
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".tmp");
    p.into()
}

/// Runs a writer that produces `path` and `<path>.json` against temporary
/// names, then renames both into place.
fn write_pair_atomic(path: &Path, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = tmp_path(path);
    f(&tmp)?;
    fs::rename(Layout::sidecar(&tmp), Layout::sidecar(path))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Exclusive writer lock on a pipeline directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(path: PathBuf) -> Result<Self> {
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Io(std::io::Error::new(
                e.kind(),
                format!("{} exists; another run is using this directory", path.display()),
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Fixed-precision float for report tables.
pub fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "nan".into()
    }
}

fn push_provenance(s: &mut String, prov: &str) {
    s.push_str(prov);
    s.push('\n');
}

/// One pipeline directory bound to a configuration.
#[derive(Debug)]
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub layout: Layout,
    hash: String,
    _lock: RunLock,
}

impl Pipeline {
    pub fn open(cfg: PipelineConfig, out_dir: &Path) -> Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(out_dir)?;
        let layout = Layout::new(out_dir);
        let lock = RunLock::acquire(layout.lock())?;
        Ok(Pipeline {
            hash: cfg.hash(),
            cfg,
            layout,
            _lock: lock,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn provenance(&self, stage: Stage) -> String {
        provenance_line(&self.hash, self.cfg.seed, stage.name())
    }

    /// A stage is current when its marker matches this configuration and
    /// all of its outputs exist.
    pub fn is_current(&self, stage: Stage) -> bool {
        let marker = fs::read_to_string(self.layout.marker(stage)).unwrap_or_default();
        marker.trim_end() == self.provenance(stage)
            && self.layout.outputs(stage, &self.cfg).iter().all(|p| p.exists())
    }

    /// Runs the stage unless it is current. Returns whether it ran.
    pub fn run_stage(&self, stage: Stage) -> Result<bool> {
        if self.is_current(stage) {
            return Ok(false);
        }
        self.execute(stage).map_err(|e| e.in_stage(stage.name()))?;
        write_atomic(&self.layout.marker(stage), format!("{}\n", self.provenance(stage)).as_bytes())
            .map_err(|e| e.in_stage(stage.name()))?;
        Ok(true)
    }

    /// Runs every stage up to and including `last`; returns the stages
    /// that were recomputed.
    pub fn run_through(&self, last: Stage) -> Result<Vec<Stage>> {
        let mut ran = Vec::new();
        for stage in Stage::ALL.into_iter().filter(|&s| s <= last) {
            if self.run_stage(stage)? {
                ran.push(stage);
            }
        }
        Ok(ran)
    }

    pub fn run_all(&self) -> Result<Vec<Stage>> {
        self.run_through(Stage::Utility)
    }

    fn execute(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Aggregate => self.aggregate(),
            Stage::Kama => self.kama(),
            Stage::Train => self.train(),
            Stage::Generate => self.generate(),
            Stage::Evaluate => self.evaluate(),
            Stage::Attack => self.attack(),
            Stage::Utility => self.utility(),
        }
    }

    pub fn load_raw(&self) -> Result<Dataset> {
        Ok(Dataset::from_records(&read_csv(&self.layout.raw(), self.cfg.grid.hours_per_day)?))
    }

    pub fn load_dataset(&self, column: &str) -> Result<Dataset> {
        if column == "raw" {
            return self.load_raw();
        }
        Ok(Dataset::from_records(&read_csv(&self.layout.data(column), self.cfg.grid.hours_per_day)?))
    }

    /// Raw first, then every generated dataset, in column order.
    pub fn load_all(&self) -> Result<Vec<(&'static str, Dataset)>> {
        columns(&self.cfg).into_iter().map(|c| Ok((c, self.load_dataset(c)?))).collect()
    }

    /// Training and held-out users from `split.csv`.
    pub fn load_split(&self) -> Result<(Vec<String>, Vec<String>)> {
        let text = fs::read_to_string(self.layout.split())?;
        let (mut train, mut held) = (Vec::new(), Vec::new());
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            match line.split_once(',') {
                Some((u, "train")) => train.push(u.to_string()),
                Some((u, "test")) => held.push(u.to_string()),
                _ => {
                    return Err(Error::Format {
                        path: self.layout.split(),
                        message: format!("bad row '{line}'"),
                    })
                }
            }
        }
        Ok((train, held))
    }

    /// Each user's anonymized matrix, users in sorted order.
    pub fn load_anonymized(&self) -> Result<Vec<(String, MobilityMatrix)>> {
        let (cluster_mats, _) = read_matrices(&self.layout.kama())?;
        let path = self.layout.kama_clusters();
        let text = fs::read_to_string(&path)?;
        let mut out = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            let cluster: Option<usize> = fields.get(1).and_then(|c| c.parse().ok());
            match (fields.first(), cluster.and_then(|c| cluster_mats.get(c))) {
                (Some(u), Some(m)) => out.push((u.to_string(), m.clone())),
                _ => {
                    return Err(Error::Format {
                        path,
                        message: format!("bad row '{line}'"),
                    })
                }
            }
        }
        Ok(out)
    }

    fn aggregate(&self) -> Result<()> {
        let cfg = &self.cfg;
        let records = match &cfg.input {
            Some(path) => read_csv(path, cfg.grid.hours_per_day)?,
            None => generate_world(&cfg.world, &cfg.grid, cfg.seed)?.0.records(),
        };
        let raw = Dataset::from_records(&records);
        if raw.is_empty() {
            return Err(Error::EmptyInput("raw dataset has no trajectories".into()));
        }
        let prov = self.provenance(Stage::Aggregate);
        write_atomic(&self.layout.raw(), render_csv(&raw, &[prov.clone()], false).as_bytes())?;

        let users = raw.user_ids();
        let matrices = users
            .iter()
            .map(|u| aggregate_user(&raw.user_records(u), &cfg.grid))
            .collect::<Result<Vec<_>>>()?;
        write_pair_atomic(&self.layout.matrices(), |p| write_matrices(p, &matrices, &cfg.grid, &[prov.clone()]))?;

        let (train_users, held) = split_users(&users, 4, cfg.seed);
        let mut s = String::new();
        push_provenance(&mut s, &prov);
        s.push_str("user_id,role\n");
        for u in &users {
            let role = if held.contains(u) { "test" } else { "train" };
            debug_assert!(role == "test" || train_users.contains(u));
            let _ = writeln!(s, "{u},{role}");
        }
        write_atomic(&self.layout.split(), s.as_bytes())
    }

    fn kama(&self) -> Result<()> {
        let cfg = &self.cfg;
        let raw = self.load_raw()?;
        let (matrices, _) = read_matrices(&self.layout.matrices())?;
        let anon = kama_pipeline(&raw, &matrices, cfg.k, cfg.clusters, cfg.seed)?;
        let prov = self.provenance(Stage::Kama);
        write_pair_atomic(&self.layout.kama(), |p| {
            write_matrices(p, &anon.cluster_matrices, &cfg.grid, &[prov.clone()])
        })?;
        write_atomic(&self.layout.kama_clusters(), anon.manifest_csv(&[prov]).as_bytes())
    }

    fn train(&self) -> Result<()> {
        let cfg = &self.cfg;
        let prov = self.provenance(Stage::Train);
        let generator = Generator::new(cfg.generator.clone())?;
        if let Some(ckpt) = &cfg.checkpoint {
            let params = ModelParams::load(ckpt)?;
            let probe = generator.init_params(0);
            if probe.names().ne(params.names()) {
                return Err(Error::DimensionMismatch(format!(
                    "checkpoint {} does not fit the generator configuration",
                    ckpt.display()
                )));
            }
            write_pair_atomic(&self.layout.generator(), |p| params.save(p, &[prov.clone()]))?;
            let mut s = String::new();
            push_provenance(&mut s, &prov);
            let _ = writeln!(s, "# loaded from {}", ckpt.display());
            return write_atomic(&self.layout.train_log(), s.as_bytes());
        }
        let critic = Critic::new(cfg.critic.clone())?;
        let raw = self.load_raw()?;
        let (matrices, _) = read_matrices(&self.layout.matrices())?;
        let by_owner: BTreeMap<&str, &MobilityMatrix> = matrices.iter().map(|m| (m.owner.as_str(), m)).collect();
        let (train_users, _) = self.load_split()?;
        let daily = raw.to_daily(&cfg.grid)?;
        let mut data = BTreeMap::new();
        for u in &train_users {
            let matrix = by_owner
                .get(u.as_str())
                .ok_or_else(|| Error::LabelMismatch(format!("no matrix for training user '{u}'")))?;
            let days = daily.iter().filter(|d| &d.user_id == u).map(|d| d.cells.as_slice()).collect();
            data.insert(u.clone(), UserData { matrix, days });
        }
        let mut out = train(&generator, &critic, &data, &cfg.train_config())?;
        out.log.config_hash = self.hash.clone();
        write_pair_atomic(&self.layout.generator(), |p| out.generator.save(p, &[prov.clone()]))?;
        write_pair_atomic(&self.layout.critic(), |p| out.critic.save(p, &[prov.clone()]))?;
        write_atomic(&self.layout.train_log(), out.log.to_csv(&[prov], false).as_bytes())
    }

    fn generate(&self) -> Result<()> {
        let cfg = &self.cfg;
        let prov = self.provenance(Stage::Generate);
        let raw = self.load_raw()?;
        let anon = self.load_anonymized()?;
        let per_user: Vec<(&str, &MobilityMatrix)> = anon.iter().map(|(u, m)| (u.as_str(), m)).collect();
        for column in &columns(cfg)[1..] {
            let (ds, synthetic) = match *column {
                "cats" => {
                    let generator = Generator::new(cfg.generator.clone())?;
                    let params = ModelParams::load(&self.layout.generator())?;
                    let daily = evaluate_checkpoint(&generator, &params, &per_user, cfg.seed)?;
                    (Dataset::from_daily(&daily, &cfg.grid), true)
                }
                "tka" => {
                    let mut daily = Vec::new();
                    for (u, m) in &per_user {
                        daily.extend(tka_tracks(m, u, cfg.sample_size, cfg.seed)?);
                    }
                    (Dataset::from_daily(&daily, &cfg.grid), true)
                }
                name => {
                    let mech: Mechanism = name.parse()?;
                    (apply_noise(&raw, &cfg.noise_for(mech))?, false)
                }
            };
            write_atomic(&self.layout.data(column), render_csv(&ds, &[prov.clone()], synthetic).as_bytes())?;
        }
        Ok(())
    }

    fn evaluate(&self) -> Result<()> {
        let cfg = &self.cfg;
        let prov = self.provenance(Stage::Evaluate);
        let all = self.load_all()?;
        let raw = &all[0].1;
        let regions = default_regions(cfg.grid.n());
        let raw_od = dataset_od(raw, &cfg.grid, regions)?;
        let mut comparisons = Vec::new();
        let mut summaries = Vec::new();
        let mut ssims = Vec::new();
        for (name, ds) in &all {
            comparisons.push(compare(raw, ds, &cfg.grid)?);
            summaries.push(summarize(ds, &cfg.grid)?);
            let od = dataset_od(ds, &cfg.grid, regions)?;
            ssims.push(ssim_summary(&raw_od, &od)?);
            let png = heatmap_png(&od.counts, od.size(), od.size(), 4)?;
            write_atomic(&self.layout.report(&format!("od_{name}.png")), &png)?;
        }
        let names: Vec<&str> = all.iter().map(|(n, _)| *n).collect();
        write_atomic(&self.layout.report("collective.csv"), collective_table(&prov, &names, &comparisons, &summaries).as_bytes())?;
        write_atomic(&self.layout.report("individual.csv"), individual_table(&prov, &names, &summaries).as_bytes())?;
        write_atomic(&self.layout.report("hourly.csv"), hourly_table(&prov, &names, &comparisons).as_bytes())?;
        write_atomic(&self.layout.report("ssim.csv"), ssim_table(&prov, &names, &ssims).as_bytes())?;

        let mut s = String::new();
        push_provenance(&mut s, &prov);
        s.push_str("dataset,user_id,sequence_length,e_rand,e_unc,e_act,ordered\n");
        for (name, ds) in &all {
            let lengths = crate::metrics::user_sequences(ds, &cfg.grid);
            for (u, e) in user_entropy_table(ds, &cfg.grid)? {
                let len = lengths.get(&u).map_or(0, |s| s.len());
                let ok = entropy_ordered(e.random, e.uncorrelated, e.actual, len);
                let _ = writeln!(
                    s,
                    "{name},{u},{len},{},{},{},{}",
                    fmt_f(e.random),
                    fmt_f(e.uncorrelated),
                    fmt_f(e.actual),
                    ok as u8
                );
            }
        }
        write_atomic(&self.layout.report("entropy.csv"), s.as_bytes())?;

        let series: Vec<Vec<f64>> = comparisons[1..].iter().map(|c| c.hourly_w2.clone()).collect();
        write_atomic(&self.layout.report("hourly_w2.png"), &line_chart_png(&series, 480, 240)?)
    }

    fn attack(&self) -> Result<()> {
        let cfg = &self.cfg;
        let prov = self.provenance(Stage::Attack);
        let all = self.load_all()?;
        let raw = &all[0].1;
        let tests: Vec<(&str, &Dataset)> = all[1..].iter().map(|(n, d)| (*n, d)).collect();
        let outcome = tul_train_eval(raw, &tests, &cfg.grid, &cfg.tul_config())?;
        let names: Vec<&str> = all.iter().map(|(n, _)| *n).collect();
        write_atomic(&self.layout.report("tul.csv"), tul_table(&prov, &names, &outcome.reports).as_bytes())?;

        let mut summary = Vec::new();
        let mut sweep = String::new();
        push_provenance(&mut sweep, &prov);
        sweep.push_str(HLC_HEADER);
        for (name, ds) in &all {
            summary.push((*name, hlc_report(raw, ds, SUMMARY_EPS, cfg.hlc_min_pts)));
            for r in hlc_sweep(raw, ds, &eps_sweep(), cfg.hlc_min_pts) {
                sweep.push_str(&hlc_row(name, &r));
            }
        }
        let mut s = String::new();
        push_provenance(&mut s, &prov);
        s.push_str(HLC_HEADER);
        for (name, r) in &summary {
            s.push_str(&hlc_row(name, r));
        }
        write_atomic(&self.layout.report("hlc.csv"), s.as_bytes())?;
        write_atomic(&self.layout.report("hlc_sweep.csv"), sweep.as_bytes())
    }

    fn utility(&self) -> Result<()> {
        let cfg = &self.cfg;
        let prov = self.provenance(Stage::Utility);
        let all = self.load_all()?;
        let raw = &all[0].1;
        let mut aucs = String::new();
        push_provenance(&mut aucs, &prov);
        aucs.push_str("dataset,auc\n");
        let mut roc = String::new();
        push_provenance(&mut roc, &prov);
        roc.push_str("dataset,fpr,tpr\n");
        for (name, ds) in &all {
            let (auc, curve) = utility_auc(ds, raw, &cfg.grid, &cfg.fm_config())?;
            let _ = writeln!(aucs, "{name},{}", fmt_f(auc));
            for (fpr, tpr) in curve {
                let _ = writeln!(roc, "{name},{},{}", fmt_f(fpr), fmt_f(tpr));
            }
        }
        write_atomic(&self.layout.report("fm_auc.csv"), aucs.as_bytes())?;
        write_atomic(&self.layout.report("roc.csv"), roc.as_bytes())
    }
}

/// The ordering check applied per user: `E_rand ≥ E_unc` always, and
/// `E_unc ≥ E_act` once the sequence is long enough.
pub fn entropy_ordered(e_rand: f64, e_unc: f64, e_act: f64, len: usize) -> bool {
    let tol = 1e-12;
    e_rand + tol >= e_unc && (len < crate::metrics::ENTROPY_ORDER_MIN_LEN || e_unc + tol >= e_act)
}

fn table(prov: &str, names: &[&str], rows: &[(&str, Vec<f64>)]) -> String {
    let mut s = String::new();
    push_provenance(&mut s, prov);
    s.push_str("metric");
    for n in names {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for (label, values) in rows {
        s.push_str(label);
        for v in values {
            let _ = write!(s, ",{}", fmt_f(*v));
        }
        s.push('\n');
    }
    s
}

/// Collective measures, one column per dataset. W₂ is in cell units.
pub fn collective_table(prov: &str, names: &[&str], cmp: &[Comparison], sums: &[DatasetSummary]) -> String {
    let rows = vec![
        ("overall_w2", cmp.iter().map(|c| c.overall_w2).collect()),
        ("overall_jsd", cmp.iter().map(|c| c.overall_jsd).collect()),
        ("time_specific_w2", cmp.iter().map(|c| c.time_w2).collect()),
        ("time_specific_jsd", cmp.iter().map(|c| c.time_jsd).collect()),
        ("random_location_entropy", sums.iter().map(|s| s.random_location_entropy).collect()),
    ];
    table(prov, names, &rows)
}

pub fn individual_table(prov: &str, names: &[&str], sums: &[DatasetSummary]) -> String {
    let rows = vec![
        ("e_rand", sums.iter().map(|s| s.e_rand).collect()),
        ("e_unc", sums.iter().map(|s| s.e_unc).collect()),
        ("e_act", sums.iter().map(|s| s.e_act).collect()),
        ("jump_length_km", sums.iter().map(|s| s.jump_length_km).collect()),
        ("location_switches", sums.iter().map(|s| s.location_switches).collect()),
        ("radius_of_gyration_km", sums.iter().map(|s| s.radius_of_gyration_km).collect()),
        ("tortuosity_deg", sums.iter().map(|s| s.tortuosity_deg).collect()),
    ];
    table(prov, names, &rows)
}

pub fn hourly_table(prov: &str, names: &[&str], cmp: &[Comparison]) -> String {
    let mut s = String::new();
    push_provenance(&mut s, prov);
    s.push_str("hour");
    for n in names {
        let _ = write!(s, ",{n}_w2,{n}_jsd");
    }
    s.push('\n');
    let hours = cmp.first().map_or(0, |c| c.hourly_w2.len());
    for h in 0..hours {
        let _ = write!(s, "{h}");
        for c in cmp {
            let _ = write!(s, ",{},{}", fmt_f(c.hourly_w2[h]), fmt_f(c.hourly_jsd[h]));
        }
        s.push('\n');
    }
    s
}

pub fn ssim_table(prov: &str, names: &[&str], ssims: &[SsimSummary]) -> String {
    let mut s = String::new();
    push_provenance(&mut s, prov);
    s.push_str("dataset");
    if let Some(first) = ssims.first() {
        for sigma in &first.sigmas {
            let _ = write!(s, ",sigma_{}", fmt_f(*sigma));
        }
    }
    s.push_str(",mean\n");
    for (n, x) in names.iter().zip(ssims) {
        s.push_str(n);
        for v in &x.values {
            let _ = write!(s, ",{}", fmt_f(*v));
        }
        let _ = writeln!(s, ",{}", fmt_f(x.mean));
    }
    s
}

pub fn tul_table(prov: &str, names: &[&str], reports: &BTreeMap<String, TulReport>) -> String {
    let mut s = String::new();
    push_provenance(&mut s, prov);
    s.push_str("dataset,macro_precision,macro_recall,macro_f1,top1,top5\n");
    for n in names {
        if let Some(r) = reports.get(*n) {
            let _ = writeln!(
                s,
                "{n},{},{},{},{},{}",
                fmt_f(r.macro_precision),
                fmt_f(r.macro_recall),
                fmt_f(r.macro_f1),
                fmt_f(r.top1),
                fmt_f(r.top5)
            );
        }
    }
    s
}

const HLC_HEADER: &str = "dataset,eps,mean_centroid_shift,median_centroid_shift,mean_medoid_shift,median_medoid_shift,mean_clusters,median_clusters,users_compared\n";

fn hlc_row(name: &str, r: &HlcReport) -> String {
    format!(
        "{name},{},{},{},{},{},{},{},{}\n",
        fmt_f(r.eps),
        fmt_f(r.mean_centroid_shift),
        fmt_f(r.median_centroid_shift),
        fmt_f(r.mean_medoid_shift),
        fmt_f(r.median_medoid_shift),
        fmt_f(r.mean_clusters),
        fmt_f(r.median_clusters),
        r.users_compared
    )
}

/// Reads a `metric,<col>...` report table into `metric -> column -> value`.
pub fn parse_table(text: &str) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().map(|h| h.split(',').collect()).unwrap_or_default();
    let mut out = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let row: BTreeMap<String, f64> = header
            .iter()
            .zip(&f)
            .skip(1)
            .map(|(h, v)| (h.to_string(), v.parse().unwrap_or(f64::NAN)))
            .collect();
        out.insert(f[0].to_string(), row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(".lock");
        let a = RunLock::acquire(p.clone()).unwrap();
        assert!(RunLock::acquire(p.clone()).is_err());
        drop(a);
        assert!(!p.exists());
        RunLock::acquire(p).unwrap();
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("nope".parse::<Stage>().unwrap_err().is_validation());
    }

    #[test]
    fn tables_use_fixed_precision() {
        let t = table("# p", &["raw", "gg"], &[("x", vec![1.0 / 3.0, f64::NAN])]);
        assert_eq!(t, "# p\nmetric,raw,gg\nx,0.333333,nan\n");
        let parsed = parse_table(&t);
        assert_eq!(parsed["x"]["raw"], 0.333333);
        assert!(parsed["x"]["gg"].is_nan());
    }

    #[test]
    fn columns_follow_report_order() {
        let mut cfg = PipelineConfig::default();
        cfg.mechanisms = vec!["cats".into(), "gg".into()];
        assert_eq!(columns(&cfg), vec!["raw", "gg", "cats"]);
    }

    #[test]
    fn atomic_writes_leave_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"x").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"x");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
