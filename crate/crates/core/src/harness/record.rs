use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::rates::RateFit;
use crate::error::{Error, Result};

/// Per-level diagnostics of one row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelBlock {
    pub samples: usize,
    pub dim: usize,
    pub deviation: f64,
    pub zeroed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Finest level for multilevel runs, the discretization level for single-level runs.
    pub level: usize,
    pub work: f64,
    /// Seconds spent in evaluations and fits; not reproducible.
    pub wall_time_s: f64,
    pub error: f64,
    pub error_se: f64,
    pub seed: u64,
    pub blocks: Vec<LevelBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub version: String,
    pub rows: Vec<Row>,
    pub fitted: Option<RateFit>,
}

pub const FIXED_COLUMNS: [&str; 6] = ["L", "work", "wall_time_s", "error", "error_se", "seed"];
pub const BLOCK_COLUMNS: [&str; 4] = ["samples", "dim", "deviation", "zeroed"];

impl RunRecord {
    pub fn new(config: RunConfig, mut rows: Vec<Row>, fitted: Option<RateFit>) -> Self {
        sort_rows(&mut rows);
        RunRecord {
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rows,
            fitted,
        }
    }

    pub fn max_blocks(&self) -> usize {
        self.rows.iter().map(|r| r.blocks.len()).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> Result<String> {
        let blocks = self.max_blocks();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        for l in 0..blocks {
            header.extend(BLOCK_COLUMNS.iter().map(|c| format!("{c}_{l}")));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.level.to_string(),
                r.work.to_string(),
                r.wall_time_s.to_string(),
                r.error.to_string(),
                r.error_se.to_string(),
                r.seed.to_string(),
            ];
            for l in 0..blocks {
                match r.blocks.get(l) {
                    Some(b) => rec.extend([
                        b.samples.to_string(),
                        b.dim.to_string(),
                        b.deviation.to_string(),
                        u8::from(b.zeroed).to_string(),
                    ]),
                    None => rec.extend(std::iter::repeat(String::new()).take(BLOCK_COLUMNS.len())),
                }
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Metadata document without the rows.
    pub fn metadata(&self) -> Result<String> {
        let meta = Metadata {
            config: self.config.clone(),
            version: self.version.clone(),
            seeds: self.config.seeds.clone(),
            fitted: self.fitted,
            non_deterministic_columns: vec!["wall_time_s".into()],
        };
        Ok(serde_json::to_string_pretty(&meta)? + "\n")
    }

    /// Writes `path` as CSV and the metadata next to it with a `.json` extension.
    pub fn emit(&self, path: &Path) -> Result<(PathBuf, PathBuf)> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let meta_path = path.with_extension("json");
        std::fs::write(path, self.to_csv()?)?;
        std::fs::write(&meta_path, self.metadata()?)?;
        Ok((path.to_path_buf(), meta_path))
    }

    pub fn parse(csv_text: &str, metadata: &str) -> Result<Self> {
        let meta: Metadata = serde_json::from_str(metadata).map_err(|e| Error::Parse(e.to_string()))?;
        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let header = reader.headers()?.clone();
        if header.len() < FIXED_COLUMNS.len()
            || header.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b)
            || (header.len() - FIXED_COLUMNS.len()) % BLOCK_COLUMNS.len() != 0
        {
            return Err(Error::Parse("unexpected CSV header".into()));
        }
        let blocks = (header.len() - FIXED_COLUMNS.len()) / BLOCK_COLUMNS.len();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let mut row = Row {
                level: num(field(0))?,
                work: num(field(1))?,
                wall_time_s: num(field(2))?,
                error: num(field(3))?,
                error_se: num(field(4))?,
                seed: num(field(5))?,
                blocks: Vec::new(),
            };
            for l in 0..blocks {
                let base = FIXED_COLUMNS.len() + l * BLOCK_COLUMNS.len();
                if field(base).is_empty() {
                    break;
                }
                row.blocks.push(LevelBlock {
                    samples: num(field(base))?,
                    dim: num(field(base + 1))?,
                    deviation: num(field(base + 2))?,
                    zeroed: num::<u8>(field(base + 3))? != 0,
                });
            }
            rows.push(row);
        }
        Ok(RunRecord {
            config: meta.config,
            version: meta.version,
            rows,
            fitted: meta.fitted,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let csv_text = std::fs::read_to_string(path)?;
        let meta = std::fs::read_to_string(path.with_extension("json"))?;
        Self::parse(&csv_text, &meta)
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.work, r.error)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: RunConfig,
    version: String,
    seeds: Vec<u64>,
    fitted: Option<RateFit>,
    non_deterministic_columns: Vec<String>,
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

/// Orders rows by work, then level and seed.
pub fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| {
        a.work
            .total_cmp(&b.work)
            .then(a.level.cmp(&b.level))
            .then(a.seed.cmp(&b.seed))
            .then(a.error.total_cmp(&b.error))
    });
}

/// CSV text with the wall-time column removed.
pub fn strip_wall_time(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|line| {
            let mut parts: Vec<&str> = line.split(',').collect();
            if parts.len() > 2 {
                parts.remove(2);
            }
            parts.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Method, Sweep};
    use crate::problems::{ProblemSpec, SyntheticConfig};

    fn config() -> RunConfig {
        RunConfig::new(
            ProblemSpec::Synthetic(SyntheticConfig::new(1, 3.0, 2.0, 2.0, 2.0, 2.0)),
            Method::Ml,
            Sweep::Levels(vec![1, 2]),
            vec![7],
        )
    }

    fn row(level: usize, work: f64) -> Row {
        Row {
            level,
            work,
            wall_time_s: 0.125,
            error: 0.1 / work,
            error_se: 1e-3 / 3.0,
            seed: 7,
            blocks: (0..=level)
                .map(|l| LevelBlock {
                    samples: 10 + l,
                    dim: 1 + l,
                    deviation: 0.1 * l as f64 + 1.0 / 3.0,
                    zeroed: l == 1,
                })
                .collect(),
        }
    }

    #[test]
    fn header_only_when_empty() {
        let r = RunRecord::new(config(), vec![], None);
        assert_eq!(r.to_csv().unwrap(), "L,work,wall_time_s,error,error_se,seed\n");
        assert!(r.metadata().unwrap().contains("\"version\""));
    }

    #[test]
    fn columns_and_sorting() {
        let r = RunRecord::new(config(), vec![row(2, 300.0), row(1, 20.0)], None);
        let text = r.to_csv().unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("L,work,wall_time_s,error,error_se,seed,samples_0,dim_0,deviation_0,zeroed_0,samples_1"));
        assert_eq!(r.rows[0].level, 1);
        assert!(text.lines().nth(1).unwrap().ends_with(",,,,"));
    }

    #[test]
    fn round_trip() {
        let fitted = Some(RateFit { slope: -0.9, intercept: 0.2, log_power: 1.0 });
        let r = RunRecord::new(config(), vec![row(2, 300.0), row(1, 20.0), row(0, 1.0 / 3.0)], fitted);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/run.csv");
        r.emit(&path).unwrap();
        assert_eq!(RunRecord::load(&path).unwrap(), r);
        assert!(RunRecord::parse("a,b\n", &r.metadata().unwrap()).is_err());
    }

    #[test]
    fn wall_time_stripped() {
        assert_eq!(strip_wall_time("L,work,wall_time_s,error\n1,2,3.5,4"), "L,work,error\n1,2,4");
    }
}
