//! File formats: request records, travel-time tables, distributions, run
//! outputs and the reproducibility manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::IoError;
use crate::grid::{CellGrid, CellId, Location};
use crate::model::{Objective, ObjectiveMode, Request, RequestId};
use crate::sim::{ComparisonRow, Metrics, Timing};
use crate::travel::{Leg, TravelTimeProvider};

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IoError::File { path: path.display().to_string(), source },
        _ => IoError::Parse { path: path.display().to_string(), line, message },
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(file_error(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(file_error(path))?))
}

/// Writes `value` as pretty JSON.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::Format(e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(file_error(path))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(file_error(path))?;
    serde_json::from_str(&text)
        .map_err(|e| IoError::Parse { path: path.display().to_string(), line: e.line() as u64, message: e.to_string() })
}

/// One row of a request file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    pub pickup_x: f64,
    pub pickup_y: f64,
    pub dropoff_x: f64,
    pub dropoff_y: f64,
    pub start_time_s: f64,
    pub revenue: f64,
}

impl From<&Request> for RequestRecord {
    fn from(r: &Request) -> Self {
        Self {
            id: r.id.0,
            pickup_x: r.origin.x,
            pickup_y: r.origin.y,
            dropoff_x: r.destination.x,
            dropoff_y: r.destination.y,
            start_time_s: r.start_time,
            revenue: r.reward,
        }
    }
}

/// Requests read from a file, sorted by start time.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRequests {
    pub requests: Vec<Request>,
    pub rows: usize,
    /// Rows dropped by density thinning.
    pub thinned: usize,
    /// Rows with a pickup or drop-off outside the travel-time area.
    pub out_of_area: usize,
}

impl LoadedRequests {
    pub fn by_epoch(&self, period_s: f64) -> BTreeMap<u32, Vec<Request>> {
        let mut out: BTreeMap<u32, Vec<Request>> = BTreeMap::new();
        for r in &self.requests {
            out.entry((r.start_time / period_s).floor() as u32).or_default().push(*r);
        }
        out
    }
}

/// Reads a request file, keeping each row with probability `density` (one
/// seeded coin per row, in file order). Rewards are the revenue column in
/// profit mode and 1 otherwise; arrival times come from `tt`.
pub fn load_requests(
    path: &Path,
    density: f64,
    seed: u64,
    objective: &Objective,
    tt: &TravelTimeProvider,
) -> Result<LoadedRequests, IoError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(IoError::Format(format!("request density {density} outside (0, 1]")));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = tt.area();
    let mut out = LoadedRequests { requests: Vec::new(), rows: 0, thinned: 0, out_of_area: 0 };
    for row in reader.deserialize::<RequestRecord>() {
        let rec = row.map_err(|e| csv_error(path, e))?;
        out.rows += 1;
        let line = out.rows as u64 + 1;
        let values = [rec.pickup_x, rec.pickup_y, rec.dropoff_x, rec.dropoff_y, rec.start_time_s, rec.revenue];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IoError::Parse { path: path.display().to_string(), line, message: "non-finite value".into() });
        }
        if rec.revenue < 0.0 {
            return Err(IoError::Parse { path: path.display().to_string(), line, message: "negative revenue".into() });
        }
        if density < 1.0 && !rng.random_bool(density) {
            out.thinned += 1;
            continue;
        }
        let origin = Location::new(rec.pickup_x, rec.pickup_y);
        let destination = Location::new(rec.dropoff_x, rec.dropoff_y);
        if !area.contains(&origin) || !area.contains(&destination) {
            out.out_of_area += 1;
            continue;
        }
        let reward = match objective.mode {
            ObjectiveMode::Profit => rec.revenue,
            ObjectiveMode::SatisfiedCustomers => 1.0,
        };
        out.requests.push(Request::from_provider(RequestId(rec.id), origin, destination, rec.start_time_s, reward, tt));
    }
    if out.out_of_area > 0 {
        log::warn!("{}: skipped {} requests outside the area", path.display(), out.out_of_area);
    }
    out.requests.sort_by(|a, b| a.start_time.total_cmp(&b.start_time).then(a.id.cmp(&b.id)));
    Ok(out)
}

pub fn write_requests(path: &Path, requests: &[Request]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in requests {
        w.serialize(RequestRecord::from(r)).map_err(|e| csv_error(path, e))?;
    }
    if requests.is_empty() {
        w.write_record(["id", "pickup_x", "pickup_y", "dropoff_x", "dropoff_y", "start_time_s", "revenue"])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(file_error(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableEntry {
    from: CellId,
    to: CellId,
    seconds: f64,
    km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TravelFile {
    grid: CellGrid,
    fallback_speed_kmh: f64,
    /// Absent for a pure straight-line provider.
    table: Option<Vec<TableEntry>>,
}

pub fn save_travel_times(tt: &TravelTimeProvider, path: &Path) -> Result<(), IoError> {
    let table = tt.has_table().then(|| {
        tt.entries()
            .into_iter()
            .map(|((from, to), leg)| TableEntry { from, to, seconds: leg.seconds, km: leg.km })
            .collect()
    });
    save_json(&TravelFile { grid: tt.grid().clone(), fallback_speed_kmh: tt.fallback_speed_kmh(), table }, path)
}

pub fn load_travel_times(path: &Path) -> Result<TravelTimeProvider, IoError> {
    let f: TravelFile = load_json(path)?;
    if !(f.fallback_speed_kmh > 0.0) {
        return Err(IoError::Format(format!("{}: fallback speed must be positive", path.display())));
    }
    let cells = f.grid.num_cells() as CellId;
    Ok(match f.table {
        None => TravelTimeProvider::straight_line_on(f.grid, f.fallback_speed_kmh),
        Some(entries) => {
            for e in &entries {
                if e.from >= cells || e.to >= cells || !(e.seconds >= 0.0) || !(e.km >= 0.0) {
                    return Err(IoError::Format(format!("{}: bad table entry {e:?}", path.display())));
                }
            }
            let entries = entries.into_iter().map(|e| ((e.from, e.to), Leg { seconds: e.seconds, km: e.km }));
            TravelTimeProvider::with_table(f.grid, f.fallback_speed_kmh, entries)
        }
    })
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    policy: &'a str,
    reward: f64,
    requests: usize,
    served: usize,
    service_ratio: f64,
    km: f64,
    km_per_request: f64,
    km_per_vehicle: f64,
    fleet_size: usize,
    decisions_validated: usize,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(file_error(path))
}

/// Summary row of each run.
pub fn write_metrics(path: &Path, runs: &[&Metrics]) -> Result<(), IoError> {
    write_rows(
        path,
        runs.iter().map(|m| MetricsRow {
            policy: &m.policy,
            reward: m.reward,
            requests: m.requests,
            served: m.served,
            service_ratio: m.service_ratio,
            km: m.km,
            km_per_request: m.km_per_request,
            km_per_vehicle: m.km_per_vehicle,
            fleet_size: m.fleet_size,
            decisions_validated: m.decisions_validated,
        }),
    )
}

pub fn write_epochs(path: &Path, metrics: &Metrics) -> Result<(), IoError> {
    write_rows(path, &metrics.epochs)
}

pub fn write_snapshots(path: &Path, metrics: &Metrics) -> Result<(), IoError> {
    write_rows(path, &metrics.snapshots)
}

pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<(), IoError> {
    write_rows(path, rows)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    policy: &'a str,
    decide_s_total: f64,
    decide_s_mean: f64,
    decide_s_max: f64,
}

/// Wall-clock timings, kept apart from the deterministic metrics.
pub fn write_timing(path: &Path, runs: &[(&str, Timing)]) -> Result<(), IoError> {
    write_rows(path, runs.iter().map(|(policy, timing)| TimingRow {
            policy,
            decide_s_total: timing.decide_s_total,
            decide_s_mean: timing.decide_s_mean,
            decide_s_max: timing.decide_s_max,
        }))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(file_error(path))?))
}

/// Everything needed to reproduce a CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: Option<String>,
    /// Input files with their hashes.
    pub inputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub lookup_cell_m: Option<f64>,
    pub fallback_speed_kmh: Option<f64>,
    pub args: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: None,
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            lookup_cell_m: None,
            fallback_speed_kmh: None,
            args: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), IoError> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn travel_times(&mut self, tt: &TravelTimeProvider) {
        self.lookup_cell_m = Some(tt.grid().cell_width_m);
        self.fallback_speed_kmh = Some(tt.fallback_speed_kmh());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundingBox;

    fn tt() -> TravelTimeProvider {
        TravelTimeProvider::straight_line(BoundingBox::new(0.0, 0.0, 2000.0, 2000.0), 20.0)
    }

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("requests.csv");
        std::fs::write(&p, format!("id,pickup_x,pickup_y,dropoff_x,dropoff_y,start_time_s,revenue\n{body}")).unwrap();
        p
    }

    #[test]
    fn loads_sorted_with_arrivals() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "2,0,0,1000,0,120,7.5\n1,10,10,10,1010,60,4\n");
        let loaded = load_requests(&p, 1.0, 0, &Objective::profit(), &tt()).unwrap();
        assert_eq!(loaded.requests.len(), 2);
        assert_eq!(loaded.requests[0].id, RequestId(1));
        assert!((loaded.requests[1].arrival_time - 300.0).abs() < 1e-9);
        assert_eq!(loaded.requests[1].reward, 7.5);
        let c = load_requests(&p, 1.0, 0, &Objective::satisfied_customers(), &tt()).unwrap();
        assert!(c.requests.iter().all(|r| r.reward == 1.0));
        let epochs = loaded.by_epoch(60.0);
        assert_eq!(epochs.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "1,0,0,10,10,0,1\n2,0,0,abc,10,0,1\n");
        match load_requests(&p, 1.0, 0, &Objective::profit(), &tt()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let p = write(dir.path(), "1,0,0,10,10,0,-1\n");
        assert!(matches!(load_requests(&p, 1.0, 0, &Objective::profit(), &tt()), Err(IoError::Parse { line: 2, .. })));
    }

    #[test]
    fn out_of_area_rows_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "1,0,0,10,10,0,1\n2,0,0,5000,10,0,1\n");
        let loaded = load_requests(&p, 1.0, 0, &Objective::profit(), &tt()).unwrap();
        assert_eq!((loaded.requests.len(), loaded.out_of_area), (1, 1));
    }

    #[test]
    fn thinning_is_seeded() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = (0..2000).map(|i| format!("{i},0,0,100,100,{i},1\n")).collect();
        let p = write(dir.path(), &body);
        let a = load_requests(&p, 0.3, 9, &Objective::profit(), &tt()).unwrap();
        let b = load_requests(&p, 0.3, 9, &Objective::profit(), &tt()).unwrap();
        assert_eq!(a, b);
        assert!((a.requests.len() as f64 - 600.0).abs() < 90.0);
        assert_eq!(a.thinned + a.requests.len(), 2000);
        assert!(load_requests(&p, 0.0, 9, &Objective::profit(), &tt()).is_err());
    }

    #[test]
    fn request_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let reqs: Vec<Request> = (0..5)
            .map(|i| {
                let o = Location::new(0.1 + i as f64 * 97.3, 1.0 / 3.0);
                Request::from_provider(RequestId(i), o, Location::new(1500.0, 0.7), 60.0 * i as f64 + 0.1, 2.0 / 7.0, &tt())
            })
            .collect();
        let p = dir.path().join("out.csv");
        write_requests(&p, &reqs).unwrap();
        assert_eq!(load_requests(&p, 1.0, 0, &Objective::profit(), &tt()).unwrap().requests, reqs);
    }

    #[test]
    fn travel_table_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = CellGrid::square(BoundingBox::new(0.0, 0.0, 1000.0, 1000.0), 500.0);
        let entries = vec![((0, 1), Leg { seconds: 1.0 / 3.0, km: 0.1 + 0.2 }), ((3, 2), Leg { seconds: 97.123456789, km: 1e-17 })];
        let t = TravelTimeProvider::with_table(grid, 20.0, entries);
        let p = dir.path().join("tt.json");
        save_travel_times(&t, &p).unwrap();
        let back = load_travel_times(&p).unwrap();
        assert_eq!(back, t);
        for ((a, b), leg) in t.entries() {
            let found = back.entries().into_iter().find(|(k, _)| *k == (a, b)).unwrap().1;
            assert_eq!(found.seconds.to_bits(), leg.seconds.to_bits());
            assert_eq!(found.km.to_bits(), leg.km.to_bits());
        }
        let s = tt();
        save_travel_times(&s, &p).unwrap();
        assert_eq!(load_travel_times(&p).unwrap(), s);
    }

    #[test]
    fn manifest_hashes_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        std::fs::write(&p, "abc").unwrap();
        let mut m = Manifest::new("simulate");
        m.input(&p).unwrap();
        assert_eq!(m.inputs.values().next().unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let q = dir.path().join("m.json");
        save_json(&m, &q).unwrap();
        assert_eq!(load_json::<Manifest>(&q).unwrap(), m);
    }
}
