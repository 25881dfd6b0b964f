use std::path::Path;

use chrono::NaiveDateTime;

use super::{AlignmentPoint, CrashEvent, DetectorReading};
use crate::error::{Error, Result};

/// A row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based line number in the file, header included.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
}

pub const TRAFFIC_COLUMNS: [&str; 7] = ["timestamp", "milepost", "direction", "lane", "vol", "occ", "spd"];
pub const CRASH_COLUMNS: [&str; 5] = ["id", "timestamp", "milepost", "direction", "crash_type"];
pub const ALIGNMENT_COLUMNS: [&str; 9] =
    ["milepost", "lanewid", "medwid", "shlwid", "no_lane", "curv_max", "deg_curv", "pct_grad", "dir_grad"];

struct Table {
    reader: csv::Reader<std::fs::File>,
    index: Vec<usize>,
}

fn open(path: &Path, required: &[&str]) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let index = required
        .iter()
        .map(|&c| {
            headers
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::MissingColumn { column: c.to_string(), path: path.display().to_string() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { reader, index })
}

fn parse_rows<T>(
    path: &Path,
    required: &[&str],
    mut make: impl FnMut(&[&str]) -> std::result::Result<T, String>,
) -> Result<Parsed<T>> {
    let mut table = open(path, required)?;
    let mut out = Parsed { records: Vec::new(), rejects: Vec::new() };
    for (i, rec) in table.reader.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject { line, reason: e.to_string() });
                continue;
            }
        };
        let fields: Option<Vec<&str>> = table.index.iter().map(|&j| rec.get(j)).collect();
        let Some(fields) = fields else {
            out.rejects.push(Reject { line, reason: "row is missing fields".into() });
            continue;
        };
        match make(&fields) {
            Ok(r) => out.records.push(r),
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    Ok(out)
}

fn num(field: &str, name: &str) -> std::result::Result<f64, String> {
    let v: f64 = field.parse().map_err(|_| format!("{name}: not a number `{field}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name}: non-finite value"))
    }
}

/// Integer minutes since the epoch, or a `YYYY-MM-DD HH:MM[:SS]` / RFC 3339-like local time.
pub fn parse_timestamp(field: &str) -> std::result::Result<i64, String> {
    if let Ok(m) = field.parse::<i64>() {
        return Ok(m);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(field, fmt) {
            return Ok(dt.and_utc().timestamp().div_euclid(60));
        }
    }
    Err(format!("timestamp: unrecognised `{field}`"))
}

pub fn parse_traffic(path: &Path) -> Result<Parsed<DetectorReading>> {
    parse_rows(path, &TRAFFIC_COLUMNS, |f| {
        let r = DetectorReading {
            timestamp: parse_timestamp(f[0])?,
            milepost: num(f[1], "milepost")?,
            direction: f[2].parse().map_err(|e: Error| e.to_string())?,
            lane: f[3].to_string(),
            vol: num(f[4], "vol")?,
            occ: num(f[5], "occ")?,
            spd: num(f[6], "spd")?,
        };
        if r.vol < 0.0 {
            return Err(format!("vol: negative value {}", r.vol));
        }
        if !(0.0..=1.0).contains(&r.occ) {
            return Err(format!("occ: {} outside [0, 1]", r.occ));
        }
        if r.spd < 0.0 {
            return Err(format!("spd: negative value {}", r.spd));
        }
        Ok(r)
    })
}

pub fn parse_crashes(path: &Path) -> Result<Parsed<CrashEvent>> {
    parse_rows(path, &CRASH_COLUMNS, |f| {
        if f[0].is_empty() {
            return Err("id: empty".into());
        }
        Ok(CrashEvent {
            id: f[0].to_string(),
            timestamp: parse_timestamp(f[1])?,
            milepost: num(f[2], "milepost")?,
            direction: f[3].parse().map_err(|e: Error| e.to_string())?,
            crash_type: f[4].parse().map_err(|e: Error| e.to_string())?,
            excluded: None,
        })
    })
}

pub fn parse_alignment(path: &Path) -> Result<Parsed<AlignmentPoint>> {
    parse_rows(path, &ALIGNMENT_COLUMNS, |f| {
        let no_lane = num(f[4], "no_lane")?;
        if ![2.0, 3.0, 4.0, 5.0].contains(&no_lane) {
            return Err(format!("no_lane: {no_lane} not in {{2,3,4,5}}"));
        }
        let p = AlignmentPoint {
            milepost: num(f[0], "milepost")?,
            lanewid: num(f[1], "lanewid")?,
            medwid: num(f[2], "medwid")?,
            shlwid: num(f[3], "shlwid")?,
            no_lane: no_lane as u8,
            curv_max: num(f[5], "curv_max")?,
            deg_curv: num(f[6], "deg_curv")?,
            pct_grad: num(f[7], "pct_grad")?,
            dir_grad: num(f[8], "dir_grad")?,
        };
        for (name, w) in [("lanewid", p.lanewid), ("medwid", p.medwid), ("shlwid", p.shlwid)] {
            if w < 0.0 {
                return Err(format!("{name}: negative width {w}"));
            }
        }
        Ok(p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn well_formed_traffic() {
        let f = file(
            "timestamp,milepost,direction,lane,vol,occ,spd\n\
             1000,150.2,N,1,30,0.1,61\n\
             1000,150.7,N,2,28,0.12,59\n\
             2019-11-01 08:05,151.1,S,1,25,0.2,55\n",
        );
        let p = parse_traffic(f.path()).unwrap();
        assert_eq!(p.records.len(), 3);
        assert!(p.rejects.is_empty());
        assert_eq!(p.records[2].timestamp % 1440, 8 * 60 + 5);
    }

    #[test]
    fn negative_speed_is_rejected_not_fatal() {
        let f = file(
            "timestamp,milepost,direction,lane,vol,occ,spd\n\
             1000,150.2,N,1,30,0.1,61\n\
             1000,150.7,N,2,28,0.12,-4\n",
        );
        let p = parse_traffic(f.path()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.rejects.len(), 1);
        assert_eq!(p.rejects[0].line, 3);
        assert!(p.rejects[0].reason.contains("spd"));
    }

    #[test]
    fn header_only_is_empty() {
        let f = file("id,timestamp,milepost,direction,crash_type\n");
        let p = parse_crashes(f.path()).unwrap();
        assert!(p.records.is_empty() && p.rejects.is_empty());
    }

    #[test]
    fn missing_column_is_named() {
        let f = file("timestamp,milepost,direction,vol,occ,spd\n1,2,N,3,0.1,50\n");
        let err = parse_traffic(f.path()).unwrap_err();
        assert!(err.to_string().contains("`lane`"), "{err}");
    }

    #[test]
    fn crash_and_alignment_invariants() {
        let f = file("id,timestamp,milepost,direction,crash_type\na,10,150,N,REAR\nb,11,150,N,FIRE\n");
        let p = parse_crashes(f.path()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.rejects.len(), 1);

        let f = file(
            "milepost,lanewid,medwid,shlwid,no_lane,curv_max,deg_curv,pct_grad,dir_grad\n\
             150,12,20,10,3,1.5,0.5,2,1\n\
             151,12,20,10,7,1.5,0.5,2,1\n\
             152,-1,20,10,3,1.5,0.5,2,1\n",
        );
        let p = parse_alignment(f.path()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.rejects.len(), 2);
    }
}
