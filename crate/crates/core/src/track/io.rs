use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Centerline, Track};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

const COLUMNS: [&str; 4] = ["x_m", "y_m", "w_tr_right_m", "w_tr_left_m"];

/// Reads a racetrack CSV (`# x_m,y_m,w_tr_right_m,w_tr_left_m`) and resamples
/// it to uniform arc-length spacing near `stepsize`.
pub fn load_track(path: impl AsRef<Path>, stepsize: f64) -> Result<Track> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "track".into());
    let raw = read_centerline(file)?;
    Track::resampled(name, raw, stepsize)
}

fn read_centerline(reader: impl std::io::Read) -> Result<Centerline> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim_start_matches('#').trim().to_string()).collect();
    let mut index = [0usize; 4];
    for (slot, col) in index.iter_mut().zip(COLUMNS) {
        *slot =
            headers.iter().position(|h| h == col).ok_or_else(|| Error::Ingestion(format!("missing column {col}")))?;
    }

    let mut points = Vec::new();
    let mut w_right = Vec::new();
    let mut w_left = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |k: usize| -> Result<f64> {
            let raw = record
                .get(index[k])
                .ok_or_else(|| Error::Ingestion(format!("row {} is missing column {}", row + 1, COLUMNS[k])))?;
            raw.parse::<f64>()
                .map_err(|_| Error::Ingestion(format!("row {}: cannot parse {} value {raw:?}", row + 1, COLUMNS[k])))
        };
        points.push(Vec2::new(field(0)?, field(1)?));
        w_right.push(field(2)?);
        w_left.push(field(3)?);
    }
    Centerline::new(points, w_left, w_right)
}

/// Writes a track in the public racetrack CSV layout.
pub fn write_track_csv(track: &Track, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::from("# x_m,y_m,w_tr_right_m,w_tr_left_m\n");
    let c = &track.centerline;
    for i in 0..c.len() {
        out.push_str(&format!("{},{},{},{}\n", c.points[i].x, c.points[i].y, c.w_right[i], c.w_left[i]));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle_csv(radius: f64, n: usize) -> String {
        let mut s = String::from("# x_m,y_m,w_tr_right_m,w_tr_left_m\n");
        for i in 0..n {
            let t = 2.0 * PI * i as f64 / n as f64;
            s.push_str(&format!("{},{},1.5,1.5\n", radius * t.cos(), radius * t.sin()));
        }
        s
    }

    #[test]
    fn circle_csv_resamples_to_expected_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("circle.csv");
        std::fs::write(&path, circle_csv(20.0, 100)).unwrap();
        let track = load_track(&path, 1.0).unwrap();
        assert_eq!(track.len(), 126);
        assert!((track.length() - 2.0 * PI * 20.0).abs() < 0.05, "{}", track.length());
        assert_eq!(track.name, "circle");

        let raw = read_centerline(circle_csv(20.0, 100).as_bytes()).unwrap();
        let n = raw.len();
        let original: f64 = (0..n).map(|i| raw.points[i].distance(raw.points[(i + 1) % n])).sum();
        assert!((track.length() - original).abs() / original < 1e-3);
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "# x_m,y_m,w_tr_right_m\n0,0,1\n";
        let err = read_centerline(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing column"), "{err}");
        assert!(err.to_string().contains("w_tr_left_m"));
    }

    #[test]
    fn too_few_points_is_reported() {
        let err = read_centerline(circle_csv(5.0, 10).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)));
    }

    #[test]
    fn write_then_load_preserves_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.csv");
        std::fs::write(&src, circle_csv(12.0, 90)).unwrap();
        let track = load_track(&src, 0.5).unwrap();
        let out = dir.path().join("out.csv");
        write_track_csv(&track, &out).unwrap();
        let raw = read_centerline(File::open(&out).unwrap()).unwrap();
        assert_eq!(raw.points, track.centerline.points);
        assert_eq!(raw.w_left, track.centerline.w_left);
    }
}
