//! Point-cloud readers: ASCII PLY and CSV.

use std::fs;
use std::path::Path;

use super::SurfaceError;

/// Positions and raw (unnormalized) ROI weights.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCloud {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Reads `.ply` or `.csv` by extension.
pub fn read_cloud(path: &Path) -> Result<RawCloud, SurfaceError> {
    let text = fs::read_to_string(path).map_err(|e| SurfaceError::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ply") => parse_ply(&text).map_err(|(line, msg)| SurfaceError::parse(path, line, msg)),
        Some("csv") | Some("txt") => parse_csv(&text).map_err(|(line, msg)| SurfaceError::parse(path, line, msg)),
        _ => Err(SurfaceError::parse(path, 0, "unknown point cloud format (expected .ply or .csv)")),
    }
}

type ParseResult<T> = Result<T, (usize, String)>;

/// ASCII PLY with `x y z` and either a `weight` property or a `green`
/// channel (weight = green / 255). Extra properties are ignored.
pub fn parse_ply(text: &str) -> ParseResult<RawCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err((1, "missing 'ply' magic line".into())),
    }
    let mut n_vertex = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut header_end = None;
    for (i, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err((i + 1, format!("only ascii PLY is supported, got '{fmt}'")))
            }
            ["element", "vertex", n] => {
                n_vertex = Some(n.parse::<usize>().map_err(|e| (i + 1, format!("bad vertex count: {e}")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] => {}
            ["property", _, name] if in_vertex => props.push((*name).to_string()),
            ["end_header"] => {
                header_end = Some(i);
                break;
            }
            _ => {}
        }
    }
    let header_end = header_end.ok_or((0, "missing end_header".to_string()))?;
    let n = n_vertex.ok_or((header_end + 1, "no vertex element".to_string()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err((header_end + 1, "vertex element lacks x/y/z".into())),
    };
    let weight_col = col("weight").map(|c| (c, 1.0)).or_else(|| col("green").map(|c| (c, 1.0 / 255.0)));
    let mut cloud = RawCloud {
        points: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
    };
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()).take(n) {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| (i + 1, format!("'{t}': {e}"))))
            .collect::<Result<_, _>>()?;
        if vals.len() < props.len() {
            return Err((i + 1, format!("expected {} values, got {}", props.len(), vals.len())));
        }
        cloud.points.push([vals[x], vals[y], vals[z]]);
        cloud.weights.push(weight_col.map_or(0.0, |(c, s)| vals[c] * s));
    }
    if cloud.points.len() != n {
        return Err((0, format!("header declares {n} vertices, found {}", cloud.points.len())));
    }
    Ok(cloud)
}

/// CSV rows `x,y,z[,w]`. An optional header row is skipped; a header named
/// `green` instead of a weight column is scaled by 1/255.
pub fn parse_csv(text: &str) -> ParseResult<RawCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut cloud = RawCloud {
        points: Vec::new(),
        weights: Vec::new(),
    };
    let mut weight_scale = 1.0;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| (row + 1, e.to_string()))?;
        let line = rec.position().map_or(row + 1, |p| p.line() as usize);
        if rec.is_empty() || (rec.len() == 1 && rec[0].is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = match parsed {
            Ok(v) => v,
            Err(_) if cloud.points.is_empty() && row == 0 => {
                if rec.get(3).is_some_and(|h| h.eq_ignore_ascii_case("green")) {
                    weight_scale = 1.0 / 255.0;
                }
                continue;
            }
            Err(e) => return Err((line, e.to_string())),
        };
        if vals.len() < 3 {
            return Err((line, format!("expected at least 3 columns, got {}", vals.len())));
        }
        cloud.points.push([vals[0], vals[1], vals[2]]);
        cloud.weights.push(vals.get(3).map_or(0.0, |w| w * weight_scale));
    }
    Ok(cloud)
}
