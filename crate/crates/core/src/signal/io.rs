use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NoiseSpec, PhasorSeries, Preprocessing, SeriesBuilder};
use crate::error::{Error, Result};

/// Sidecar metadata stored next to a measurement CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMeta {
    pub n: usize,
    pub samples: usize,
    pub is_noisy: bool,
    pub rated_voltage: f64,
    /// Noise of the samples as stored (after any filtering).
    pub noise: NoiseSpec,
    pub preprocessing: Preprocessing,
    /// Original bus labels of the stored columns.
    #[serde(default)]
    pub buses: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: f64,
    bus: usize,
    v_mag: f64,
    v_ang: f64,
    i_mag: f64,
    i_ang: f64,
}

/// Path of the JSON sidecar belonging to a measurement CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Writes one row per (sample, bus), samples in time order.
pub fn write_measurements(csv: &Path, series: &PhasorSeries, meta: &MeasurementMeta) -> Result<()> {
    let mut w = csv::Writer::from_path(csv).map_err(|e| Error::Parse(e.to_string()))?;
    for t in 0..series.len() {
        for h in 0..series.n() {
            w.serialize(Row {
                t: series.timestamps[t],
                bus: h,
                v_mag: series.v_mag[(t, h)],
                v_ang: series.v_ang[(t, h)],
                i_mag: series.i_mag[(t, h)],
                i_ang: series.i_ang[(t, h)],
            })
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(sidecar_path(csv), json + "\n")?;
    Ok(())
}

pub fn read_measurements(csv: &Path) -> Result<(PhasorSeries, MeasurementMeta)> {
    let meta_text = fs::read_to_string(sidecar_path(csv))?;
    let meta: MeasurementMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Parse(format!("measurement metadata: {e}")))?;
    let mut r = csv::Reader::from_path(csv).map_err(|e| Error::Parse(e.to_string()))?;
    let headers = r.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "bus", "v_mag", "v_ang", "i_mag", "i_ang"] {
        return Err(Error::Parse(format!("unexpected measurement header {:?}", headers)));
    }
    let n = meta.n;
    let mut builder = SeriesBuilder::new(n);
    let (mut vm, mut va, mut im, mut ia) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut expected_bus = 0;
    let mut t_sample = 0.0;
    for (line, rec) in r.deserialize::<Row>().enumerate() {
        let row = rec.map_err(|e| Error::Parse(format!("measurement row {}: {e}", line + 2)))?;
        if row.bus != expected_bus {
            return Err(Error::Parse(format!(
                "measurement row {}: expected bus {expected_bus}, found {}",
                line + 2,
                row.bus
            )));
        }
        if expected_bus == 0 {
            t_sample = row.t;
        }
        vm[row.bus] = row.v_mag;
        va[row.bus] = row.v_ang;
        im[row.bus] = row.i_mag;
        ia[row.bus] = row.i_ang;
        expected_bus += 1;
        if expected_bus == n {
            builder.push(t_sample, &vm, &va, &im, &ia);
            expected_bus = 0;
        }
    }
    if expected_bus != 0 {
        return Err(Error::Parse("measurement file ends in the middle of a sample".into()));
    }
    let series = builder.finish(meta.is_noisy);
    if series.len() != meta.samples {
        return Err(Error::Parse(format!(
            "metadata announces {} samples, file holds {}",
            meta.samples,
            series.len()
        )));
    }
    series.validate()?;
    Ok((series, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    #[test]
    fn round_trip_is_exact() {
        let v = DMatrix::from_fn(7, 3, |t, h| Complex64::from_polar(1.0 + 1e-3 * (t * h) as f64, 0.1 / (1.0 + t as f64)));
        let i = DMatrix::from_fn(7, 3, |t, h| Complex64::from_polar(0.3 + h as f64 / 7.0, 2.9 - t as f64 / 3.0));
        let series = PhasorSeries::from_cartesian(&v, &i, (0..7).map(|t| t as f64 / 3.0).collect()).unwrap();
        let meta = MeasurementMeta {
            n: 3,
            samples: 7,
            is_noisy: false,
            rated_voltage: 1.0,
            noise: NoiseSpec::uniform(3, 1e-4, 1e-4, 2e-4, 1e-4, 9),
            preprocessing: Preprocessing::default(),
            buses: vec![0, 2, 5],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_measurements(&path, &series, &meta).unwrap();
        let (back, meta_back) = read_measurements(&path).unwrap();
        assert_eq!(back, series);
        assert_eq!(meta_back, meta);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,bus,v_mag,v_ang,i_mag,i_ang\n"));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "t,bus,v_mag,v_ang,i_mag,i_ang\n0,0,1,0,1,0\n").unwrap();
        let meta = MeasurementMeta {
            n: 2,
            samples: 1,
            is_noisy: false,
            rated_voltage: 1.0,
            noise: NoiseSpec::zero(2),
            preprocessing: Preprocessing::default(),
            buses: vec![],
        };
        fs::write(sidecar_path(&path), serde_json::to_string(&meta).unwrap()).unwrap();
        assert!(read_measurements(&path).is_err());
    }
}
