//! Text formats for unitaries, DNAs, measurements, traces and checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::analytic::Candidate;
use crate::error::{Error, Result};
use crate::forward::{mode_pairs, pair_index, Measured, MeasurementSet, NoiseConfig};
use crate::ga::{Checkpoint, RunTrace};
use crate::linalg::{ComplexMatrix, UnitaryMatrix, PARSED_UNITARITY_TOL};
use crate::reck::{Dna, Gene, SCHEDULE_VERSION};

pub const SINGLE_HEADER: [&str; 4] = ["i", "j", "p", "dp"];
pub const VISIBILITY_HEADER: [&str; 6] = ["i", "j", "p", "q", "v", "dv"];
pub const TRACE_HEADER: [&str; 5] = ["iteration", "best_chi2", "mean_chi2", "mutations", "elapsed_ms"];
pub const CANDIDATE_HEADER: [&str; 4] = ["anchor_i", "anchor_j", "chi2", "flags"];

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitaryFile {
    pub m: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl UnitaryFile {
    pub fn from_unitary(u: &UnitaryMatrix) -> Self {
        let m = u.dim();
        let part = |f: fn(&Complex64) -> f64| {
            (0..m)
                .map(|r| u.matrix().row(r).iter().map(f).collect())
                .collect()
        };
        Self {
            m,
            re: part(|z| z.re),
            im: part(|z| z.im),
        }
    }

    /// Checks the shape and re-validates unitarity at [`PARSED_UNITARITY_TOL`].
    pub fn to_unitary(&self) -> Result<UnitaryMatrix> {
        let m = self.m;
        if self.re.len() != m || self.im.len() != m {
            return Err(Error::shape(format!("expected {m} rows in re and im")));
        }
        let mut data = Vec::with_capacity(m * m);
        for (r, (re, im)) in self.re.iter().zip(&self.im).enumerate() {
            if re.len() != m || im.len() != m {
                return Err(Error::shape(format!("row {r} is ragged, expected {m} entries")));
            }
            data.extend(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
        }
        UnitaryMatrix::new(ComplexMatrix::new(m, m, data)?, PARSED_UNITARITY_TOL)
    }
}

pub fn parse_unitary(text: &str) -> Result<UnitaryMatrix> {
    let file: UnitaryFile = serde_json::from_str(text)
        .map_err(|e| Error::Domain(format!("unitary JSON: {e}")))?;
    file.to_unitary()
}

pub fn read_unitary(path: &Path) -> Result<UnitaryMatrix> {
    let file: UnitaryFile = read_json(path)?;
    file.to_unitary().map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_unitary(path: &Path, u: &UnitaryMatrix) -> Result<()> {
    write_json(path, &UnitaryFile::from_unitary(u))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnaFile {
    pub m: usize,
    pub schedule_version: u32,
    pub genes: Vec<Gene>,
}

impl DnaFile {
    pub fn from_dna(dna: &Dna) -> Self {
        Self {
            m: dna.modes(),
            schedule_version: SCHEDULE_VERSION,
            genes: dna.genes().to_vec(),
        }
    }

    pub fn to_dna(&self) -> Result<Dna> {
        if self.schedule_version != SCHEDULE_VERSION {
            return Err(Error::domain(format!(
                "unsupported schedule version {} (this build reads {SCHEDULE_VERSION})",
                self.schedule_version
            )));
        }
        Dna::new(self.m, self.genes.clone())
    }
}

pub fn read_dna(path: &Path) -> Result<Dna> {
    let file: DnaFile = read_json(path)?;
    file.to_dna().map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_dna(path: &Path, dna: &Dna) -> Result<()> {
    write_json(path, &DnaFile::from_dna(dna))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a headed CSV, yielding `(line, fields)` for every record.
fn read_records(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_error(
            path,
            1,
            format!("expected header `{}`", header.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, k: usize, name: &str) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_error(path, line, format!("invalid `{name}` value {:?}", rec.get(k).unwrap_or(""))))
}

fn check_index(path: &Path, line: u64, value: usize, m: usize, name: &str) -> Result<()> {
    if value >= m {
        return Err(parse_error(path, line, format!("`{name}` = {value} is out of range for m = {m}")));
    }
    Ok(())
}

/// Single-photon CSV; must hold exactly the `m²` entries.
pub fn read_single_csv(path: &Path, m: usize) -> Result<Vec<Measured>> {
    let mut slots: Vec<Option<Measured>> = vec![None; m * m];
    for (line, rec) in read_records(path, &SINGLE_HEADER)? {
        let i: usize = field(path, line, &rec, 0, "i")?;
        let j: usize = field(path, line, &rec, 1, "j")?;
        let p: f64 = field(path, line, &rec, 2, "p")?;
        let dp: f64 = field(path, line, &rec, 3, "dp")?;
        check_index(path, line, i, m, "i")?;
        check_index(path, line, j, m, "j")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(parse_error(path, line, format!("probability {p} outside [0, 1]")));
        }
        if !(dp.is_finite() && dp > 0.0) {
            return Err(parse_error(path, line, format!("error {dp} must be positive")));
        }
        let slot = &mut slots[i * m + j];
        if slot.is_some() {
            return Err(parse_error(path, line, format!("duplicate entry ({i}, {j})")));
        }
        *slot = Some(Measured::new(p, dp));
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            s.ok_or_else(|| Error::format(path, format!("missing entry ({}, {})", k / m, k % m)))
        })
        .collect()
}

pub fn read_visibility_csv(path: &Path, m: usize) -> Result<Vec<Option<Measured>>> {
    let n = m * (m - 1) / 2;
    let mut slots: Vec<Option<Measured>> = vec![None; n * n];
    for (line, rec) in read_records(path, &VISIBILITY_HEADER)? {
        let mut idx = [0usize; 4];
        for (k, name) in ["i", "j", "p", "q"].into_iter().enumerate() {
            idx[k] = field(path, line, &rec, k, name)?;
            check_index(path, line, idx[k], m, name)?;
        }
        let [i, j, p, q] = idx;
        if i >= j || p >= q {
            return Err(parse_error(path, line, "pairs must satisfy i < j and p < q"));
        }
        let v: f64 = field(path, line, &rec, 4, "v")?;
        let dv: f64 = field(path, line, &rec, 5, "dv")?;
        if !(v.is_finite() && v <= 1.0) {
            return Err(parse_error(path, line, format!("visibility {v} above 1")));
        }
        if !(dv.is_finite() && dv > 0.0) {
            return Err(parse_error(path, line, format!("error {dv} must be positive")));
        }
        let slot = &mut slots[pair_index(m, i, j) * n + pair_index(m, p, q)];
        if slot.is_some() {
            return Err(parse_error(path, line, format!("duplicate entry ({i}, {j}; {p}, {q})")));
        }
        *slot = Some(Measured::new(v, dv));
    }
    Ok(slots)
}

pub fn write_single_csv(path: &Path, data: &MeasurementSet) -> Result<()> {
    let mut w = csv_writer(path, &SINGLE_HEADER)?;
    for (i, j, e) in data.single_entries() {
        w.write_record(&[i.to_string(), j.to_string(), fmt(e.value), fmt(e.error)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_visibility_csv(path: &Path, data: &MeasurementSet) -> Result<()> {
    let mut w = csv_writer(path, &VISIBILITY_HEADER)?;
    for ((i, j), (p, q), e) in data.visibility_entries() {
        w.write_record(&[
            i.to_string(),
            j.to_string(),
            p.to_string(),
            q.to_string(),
            fmt(e.value),
            fmt(e.error),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shortest text that parses back to the same `f64`.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    Ok(w)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Binds the two measurement files of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub m: usize,
    /// Relative paths resolve against the manifest's directory.
    pub single: PathBuf,
    pub visibility: PathBuf,
    pub noise: Option<NoiseConfig>,
    pub seed: Option<u64>,
    pub ground_truth: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn single_path(&self, base: &Path) -> PathBuf {
        self.resolve(base, &self.single)
    }

    pub fn visibility_path(&self, base: &Path) -> PathBuf {
        self.resolve(base, &self.visibility)
    }

    pub fn ground_truth_path(&self, base: &Path) -> Option<PathBuf> {
        self.ground_truth.as_ref().map(|p| self.resolve(base, p))
    }
}

pub const DATASET_MANIFEST: &str = "dataset.json";
pub const SINGLE_FILE: &str = "single.csv";
pub const VISIBILITY_FILE: &str = "visibility.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Loads a dataset from a manifest file or from a directory holding one.
pub fn read_dataset(path: &Path) -> Result<(MeasurementSet, DatasetManifest, PathBuf)> {
    let manifest_path = if path.is_dir() {
        path.join(DATASET_MANIFEST)
    } else {
        path.to_path_buf()
    };
    let manifest = DatasetManifest::read(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let m = manifest.m;
    if m < 2 {
        return Err(Error::format(&manifest_path, format!("m must be at least 2, got {m}")));
    }
    let single = read_single_csv(&manifest.single_path(&base), m)?;
    let visibility = read_visibility_csv(&manifest.visibility_path(&base), m)?;
    let data = MeasurementSet::new(m, single, visibility)
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    Ok((data, manifest, base))
}

/// Loads a measurement pair without a manifest. `m` is inferred from the
/// largest mode index in the single-photon file.
pub fn read_measurements(single: &Path, visibility: &Path) -> Result<MeasurementSet> {
    let mut m = 0;
    for (line, rec) in read_records(single, &SINGLE_HEADER)? {
        let i: usize = field(single, line, &rec, 0, "i")?;
        let j: usize = field(single, line, &rec, 1, "j")?;
        m = m.max(i + 1).max(j + 1);
    }
    if m < 2 {
        return Err(Error::format(single, "needs at least two modes"));
    }
    let p = read_single_csv(single, m)?;
    let v = read_visibility_csv(visibility, m)?;
    MeasurementSet::new(m, p, v).map_err(|e| Error::format(visibility, e.to_string()))
}

/// Writes `single.csv`, `visibility.csv` and `dataset.json` into `dir`.
pub fn write_dataset(
    dir: &Path,
    data: &MeasurementSet,
    noise: Option<NoiseConfig>,
    seed: Option<u64>,
    ground_truth: Option<&UnitaryMatrix>,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_single_csv(&dir.join(SINGLE_FILE), data)?;
    write_visibility_csv(&dir.join(VISIBILITY_FILE), data)?;
    if let Some(u) = ground_truth {
        write_unitary(&dir.join(GROUND_TRUTH_FILE), u)?;
    }
    let manifest = DatasetManifest {
        m: data.modes(),
        single: SINGLE_FILE.into(),
        visibility: VISIBILITY_FILE.into(),
        noise,
        seed,
        ground_truth: ground_truth.map(|_| GROUND_TRUTH_FILE.into()),
    };
    write_json(&dir.join(DATASET_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn write_trace_csv(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv_writer(path, &TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record(&[
            r.iteration.to_string(),
            fmt(r.best_chi2),
            fmt(r.mean_chi2),
            r.mutations.to_string(),
            r.elapsed_ms.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(iteration, best_chi2)` pairs from a trace CSV.
pub fn read_trace_best(path: &Path) -> Result<Vec<(u64, f64)>> {
    read_records(path, &TRACE_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok((
                field(path, line, &rec, 0, "iteration")?,
                field(path, line, &rec, 1, "best_chi2")?,
            ))
        })
        .collect()
}

/// Plot-ready series, independent of any plotting tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<NamedSeries>,
    pub events: Vec<SeriesEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesEvent {
    pub x: f64,
    pub y: f64,
    pub kind: String,
}

impl Series {
    pub fn from_trace(trace: &RunTrace) -> Self {
        let x: Vec<f64> = trace.records.iter().map(|r| r.iteration as f64).collect();
        let col = |name: &str, f: fn(&crate::ga::TraceRecord) -> f64| NamedSeries {
            name: name.into(),
            x: x.clone(),
            y: trace.records.iter().map(f).collect(),
        };
        Series {
            x_label: "iteration".into(),
            y_label: "chi2".into(),
            series: vec![col("best_chi2", |r| r.best_chi2), col("mean_chi2", |r| r.mean_chi2)],
            events: trace
                .events
                .iter()
                .map(|e| SeriesEvent {
                    x: e.iteration as f64,
                    y: e.new_chi2,
                    kind: serde_json::to_value(e.kind)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default(),
                })
                .collect(),
        }
    }
}

pub fn write_candidates_csv(path: &Path, candidates: &[Candidate]) -> Result<()> {
    let mut w = csv_writer(path, &CANDIDATE_HEADER)?;
    for c in candidates {
        w.write_record(&[
            c.subset.anchor_input.to_string(),
            c.subset.anchor_output.to_string(),
            c.chi2.map_or_else(|| "inf".to_string(), fmt),
            c.flags_label(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_json(path)
}

/// Writes through a temporary file so an interrupted write leaves the old
/// checkpoint intact.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        serde_json::to_writer(&mut f, ckpt).map_err(|e| Error::format(&tmp, e.to_string()))?;
        f.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// All `(i, j, p, q)` index quadruples in file order.
pub fn visibility_index_order(m: usize) -> Vec<((usize, usize), (usize, usize))> {
    let pairs = mode_pairs(m);
    pairs
        .iter()
        .flat_map(|&a| pairs.iter().map(move |&b| (a, b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{simulate_measurements, NoiseConfig};
    use crate::linalg::haar_random_unitary;
    use crate::reck::random_dna;
    use crate::rng::stream;

    #[test]
    fn unitary_round_trip_and_rejections() {
        let dir = tempfile::tempdir().unwrap();
        let u = haar_random_unitary(4, &mut stream(1, &[])).unwrap();
        let path = dir.path().join("u.json");
        write_unitary(&path, &u).unwrap();
        assert_eq!(read_unitary(&path).unwrap(), u);

        let ragged = r#"{"m":2,"re":[[1,0],[0]],"im":[[0,0],[0,0]]}"#;
        assert!(matches!(parse_unitary(ragged), Err(Error::Shape(_))));
        let not_unitary = r#"{"m":2,"re":[[1,1],[0,1]],"im":[[0,0],[0,0]]}"#;
        assert!(matches!(parse_unitary(not_unitary), Err(Error::Domain(_))));
        let slightly_off = r#"{"m":2,"re":[[1.0000001,0],[0,1]],"im":[[0,0],[0,0]]}"#;
        assert!(parse_unitary(slightly_off).is_ok());
    }

    #[test]
    fn dna_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let dna = random_dna(5, &mut stream(2, &[])).unwrap();
        let path = dir.path().join("dna.json");
        write_dna(&path, &dna).unwrap();
        assert_eq!(read_dna(&path).unwrap(), dna);
        let mut file = DnaFile::from_dna(&dna);
        file.schedule_version = 99;
        assert!(file.to_dna().is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = stream(3, &[]);
        let u = haar_random_unitary(4, &mut rng).unwrap();
        let noise = NoiseConfig::noisy(1000, 0.02);
        let data = simulate_measurements(&u, &noise, &mut rng).unwrap();
        write_dataset(dir.path(), &data, Some(noise), Some(3), Some(&u)).unwrap();
        let (back, manifest, base) = read_dataset(dir.path()).unwrap();
        assert_eq!(back, data);
        assert_eq!(manifest.seed, Some(3));
        assert_eq!(read_unitary(&manifest.ground_truth_path(&base).unwrap()).unwrap(), u);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("single.csv");
        write_text(&path, "i,j,p,dp\n0,0,0.5,0.01\n0,1,abc,0.01\n").unwrap();
        match read_single_csv(&path, 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        write_text(&path, "i,j,p\n").unwrap();
        assert!(matches!(read_single_csv(&path, 2), Err(Error::Parse { line: 1, .. })));
        write_text(&path, "i,j,p,dp\n0,0,0.5,0.01\n").unwrap();
        assert!(matches!(read_single_csv(&path, 2), Err(Error::Format { .. })));
    }

    #[test]
    fn visibility_rows_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        write_text(&path, "i,j,p,q,v,dv\n1,0,0,1,0.5,0.01\n").unwrap();
        assert!(matches!(read_visibility_csv(&path, 2), Err(Error::Parse { line: 2, .. })));
        write_text(&path, "i,j,p,q,v,dv\n0,1,0,2,0.5,0.01\n").unwrap();
        assert!(matches!(read_visibility_csv(&path, 2), Err(Error::Parse { line: 2, .. })));
        write_text(&path, "i,j,p,q,v,dv\n0,1,0,1,-0.5,0.01\n").unwrap();
        assert_eq!(read_visibility_csv(&path, 2).unwrap()[0].unwrap().value, -0.5);
    }

    #[test]
    fn index_order_matches_storage() {
        let m = 4;
        let order = visibility_index_order(m);
        let n = m * (m - 1) / 2;
        for (k, ((i, j), (p, q))) in order.into_iter().enumerate() {
            assert_eq!(k, pair_index(m, i, j) * n + pair_index(m, p, q));
        }
    }
}
