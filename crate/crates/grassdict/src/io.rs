//! Text file formats and run manifests.
//!
//! Numeric payloads are plain text with 17-significant-digit decimals, so a
//! write/read/write cycle is byte-identical and files diff cleanly across
//! platforms. All writes go through a temp-file-plus-rename so readers never
//! observe partial output.
//!
//! Formats:
//! * dictionary `mdl-v1`: header `mdl-v1 <M> <N> <rho>`, then `M` blocks of
//!   `N` lines of `rho` floats, blocks separated by one blank line;
//! * dataset `mds-v1`: same layout with header `mds-v1 <Q> <N> <rho>`;
//! * trace CSV: `iter,t99,t97,wass_chordal,wass_frob,haus_chordal,haus_frob`;
//! * sweep CSV: `snr_db,algo,dataset,` + the trace metric columns;
//! * distance CSV: labeled square matrix; partition CSV
//!   `index,label,exemplar`; merge-list CSV `step,a,b,height`; embedding CSV
//!   `index,x,y`; ground-truth codes CSV `signal,atom,coeff`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{Dendrogram, Embedding, Partition};
use crate::dictlearn::Dictionary;
use crate::linops::Mat;
use crate::synthetic::{GroundTruthEntry, RecoveryMetrics, SweepRow, TraceRow};
use crate::{Error, Result};

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write through a sibling temp file and rename, so the target is either the
/// old content or the complete new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

// ---------------------------------------------------------------------------
// mdl-v1 / mds-v1 block formats

fn render_blocks(keyword: &str, count: usize, n: usize, rho: usize, blocks: &[Mat]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{keyword} {count} {n} {rho}");
    for (b, block) in blocks.iter().enumerate() {
        if b > 0 {
            out.push('\n');
        }
        for i in 0..n {
            for j in 0..rho {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(&fmt_f64(block[(i, j)]));
            }
            out.push('\n');
        }
    }
    out
}

fn parse_blocks(text: &str, keyword: &str) -> Result<(usize, usize, usize, Vec<Mat>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != keyword {
        return Err(parse_err(1, format!("expected header `{keyword} <count> <N> <rho>`")));
    }
    let parse_count = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| parse_err(1, format!("invalid {what} `{s}`")))
    };
    let count = parse_count(fields[1], "count")?;
    let n = parse_count(fields[2], "N")?;
    let rho = parse_count(fields[3], "rho")?;
    if count == 0 || n == 0 || rho == 0 {
        return Err(parse_err(1, "counts must be positive"));
    }
    let mut blocks = Vec::with_capacity(count);
    for b in 0..count {
        if b > 0 {
            match lines.next() {
                Some((lineno, sep)) if !sep.trim().is_empty() => {
                    return Err(parse_err(lineno + 1, "expected a blank line between blocks"));
                }
                Some(_) => {}
                None => return Err(parse_err(0, format!("file ends before block {}", b + 1))),
            }
        }
        let mut block = Mat::zeros(n, rho);
        for i in 0..n {
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, format!("file ends inside block {}", b + 1)))?;
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() != rho {
                return Err(parse_err(
                    lineno + 1,
                    format!("expected {rho} values, found {}", values.len()),
                ));
            }
            for (j, v) in values.iter().enumerate() {
                let x: f64 = v
                    .parse()
                    .map_err(|_| parse_err(lineno + 1, format!("invalid number `{v}`")))?;
                if !x.is_finite() {
                    return Err(parse_err(lineno + 1, format!("non-finite value `{v}`")));
                }
                block[(i, j)] = x;
            }
        }
        blocks.push(block);
    }
    if let Some((lineno, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(lineno + 1, format!("unexpected trailing content `{extra}`")));
    }
    Ok((count, n, rho, blocks))
}

pub fn render_dictionary(dict: &Dictionary) -> String {
    render_blocks("mdl-v1", dict.len(), dict.sample_len(), dict.component_count(), dict.atoms())
}

pub fn write_dictionary(path: &Path, dict: &Dictionary) -> Result<()> {
    write_atomic(path, render_dictionary(dict).as_bytes())
}

pub fn read_dictionary(path: &Path) -> Result<Dictionary> {
    let text = fs::read_to_string(path)?;
    let (_, _, _, blocks) = parse_blocks(&text, "mdl-v1")?;
    Dictionary::new(blocks)
}

pub fn render_dataset(signals: &[Mat]) -> Result<String> {
    let first = signals.first().ok_or_else(|| Error::EmptySet("no signals to write".into()))?;
    Ok(render_blocks("mds-v1", signals.len(), first.nrows(), first.ncols(), signals))
}

pub fn write_dataset(path: &Path, signals: &[Mat]) -> Result<()> {
    write_atomic(path, render_dataset(signals)?.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Mat>> {
    let text = fs::read_to_string(path)?;
    let (_, _, _, blocks) = parse_blocks(&text, "mds-v1")?;
    Ok(blocks)
}

// ---------------------------------------------------------------------------
// CSV renderers

pub fn render_codes_csv(truth: &[Vec<GroundTruthEntry>]) -> String {
    let mut out = String::from("signal,atom,coeff\n");
    for (q, entries) in truth.iter().enumerate() {
        for e in entries {
            let _ = writeln!(out, "{q},{},{}", e.atom, fmt_f64(e.coeff));
        }
    }
    out
}

pub fn render_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iter,t99,t97,wass_chordal,wass_frob,haus_chordal,haus_frob\n");
    for row in rows {
        let m = row.metrics.as_array();
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.iteration, m[0], m[1], m[2], m[3], m[4], m[5]
        );
    }
    out
}

pub fn render_sweep_csv(rows: &[SweepRow], algo: &str, dataset: &str) -> String {
    let mut out = String::from("snr_db,algo,dataset,t99,t97,wass_chordal,wass_frob,haus_chordal,haus_frob\n");
    for row in rows {
        let snr = match row.snr_db {
            Some(db) => format!("{db}"),
            None => "inf".into(),
        };
        let m = row.metrics.as_array();
        let _ = writeln!(
            out,
            "{snr},{algo},{dataset},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        );
    }
    out
}

/// Parsed trace file: metric column names and `(iteration, values)` rows.
#[derive(Debug, Clone)]
pub struct TraceData {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

pub fn parse_trace_csv(text: &str) -> Result<TraceData> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty trace"))?;
    let mut fields = header.split(',');
    if fields.next() != Some("iter") {
        return Err(parse_err(1, "trace header must start with `iter`"));
    }
    let columns: Vec<String> = fields.map(str::to_owned).collect();
    if columns.is_empty() {
        return Err(parse_err(1, "trace needs at least one metric column"));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let iter_s = parts.next().unwrap_or_default();
        let iteration: usize =
            iter_s.parse().map_err(|_| parse_err(lineno + 1, format!("invalid iteration `{iter_s}`")))?;
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>().map_err(|_| parse_err(lineno + 1, format!("invalid value `{p}`"))))
            .collect::<Result<_>>()?;
        if values.len() != columns.len() {
            return Err(parse_err(
                lineno + 1,
                format!("expected {} values, found {}", columns.len(), values.len()),
            ));
        }
        rows.push((iteration, values));
    }
    if rows.is_empty() {
        return Err(parse_err(1, "trace has no data rows"));
    }
    Ok(TraceData { columns, rows })
}

pub fn read_trace_csv(path: &Path) -> Result<TraceData> {
    parse_trace_csv(&fs::read_to_string(path)?)
}

fn sanitize_label(label: &str) -> String {
    label.replace([',', '\n', '\r'], "_")
}

/// Labeled symmetric distance matrix.
pub fn render_distance_csv(labels: &[String], d: &Mat) -> String {
    let mut out = String::from("label");
    for l in labels {
        out.push(',');
        out.push_str(&sanitize_label(l));
    }
    out.push('\n');
    for i in 0..d.nrows() {
        out.push_str(&sanitize_label(&labels[i]));
        for j in 0..d.ncols() {
            out.push(',');
            out.push_str(&fmt_f64(d[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn parse_distance_csv(text: &str) -> Result<(Vec<String>, Mat)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty distance matrix"))?;
    let labels: Vec<String> = header.split(',').skip(1).map(str::to_owned).collect();
    let n = labels.len();
    if n == 0 {
        return Err(parse_err(1, "distance matrix has no columns"));
    }
    let mut d = Mat::zeros(n, n);
    let mut row = 0usize;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if row >= n {
            return Err(parse_err(lineno + 1, "more rows than labels"));
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != n + 1 {
            return Err(parse_err(lineno + 1, format!("expected {} fields, found {}", n + 1, parts.len())));
        }
        for (j, p) in parts[1..].iter().enumerate() {
            d[(row, j)] = p
                .parse::<f64>()
                .map_err(|_| parse_err(lineno + 1, format!("invalid value `{p}`")))?;
        }
        row += 1;
    }
    if row != n {
        return Err(parse_err(0, format!("expected {n} rows, found {row}")));
    }
    Ok((labels, d))
}

pub fn read_distance_csv(path: &Path) -> Result<(Vec<String>, Mat)> {
    parse_distance_csv(&fs::read_to_string(path)?)
}

pub fn render_partition_csv(partition: &Partition) -> String {
    let mut out = String::from("index,label,exemplar\n");
    let clusters = partition.clusters();
    for (i, &label) in partition.labels().iter().enumerate() {
        let exemplar = partition
            .exemplars()
            .map(|e| e[label].to_string())
            .unwrap_or_else(|| clusters[label][0].to_string());
        let _ = writeln!(out, "{i},{label},{exemplar}");
    }
    out
}

pub fn parse_partition_csv(text: &str) -> Result<Partition> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty partition"))?;
    if !header.starts_with("index,label") {
        return Err(parse_err(1, "partition header must be `index,label,exemplar`"));
    }
    let mut labels: Vec<(usize, usize)> = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 2 {
            return Err(parse_err(lineno + 1, "expected `index,label[,exemplar]`"));
        }
        let idx: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("invalid index `{}`", parts[0])))?;
        let label: usize = parts[1]
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("invalid label `{}`", parts[1])))?;
        labels.push((idx, label));
    }
    labels.sort_unstable();
    for (pos, &(idx, _)) in labels.iter().enumerate() {
        if idx != pos {
            return Err(parse_err(0, format!("partition indices must be 0..n, missing {pos}")));
        }
    }
    Partition::new(&labels.into_iter().map(|(_, l)| l).collect::<Vec<_>>(), None)
}

pub fn read_partition_csv(path: &Path) -> Result<Partition> {
    parse_partition_csv(&fs::read_to_string(path)?)
}

pub fn render_merges_csv(dendrogram: &Dendrogram) -> String {
    let mut out = String::from("step,a,b,height\n");
    for m in &dendrogram.merges {
        let _ = writeln!(out, "{},{},{},{}", m.step, m.a, m.b, fmt_f64(m.height));
    }
    out
}

pub fn render_embedding_csv(embedding: &Embedding) -> String {
    let dims = embedding.coordinates.ncols();
    let mut out = String::from("index");
    for d in 0..dims {
        let _ = write!(out, ",{}", ["x", "y", "z"].get(d).copied().unwrap_or("c"));
    }
    out.push('\n');
    for i in 0..embedding.coordinates.nrows() {
        let _ = write!(out, "{i}");
        for d in 0..dims {
            out.push(',');
            out.push_str(&fmt_f64(embedding.coordinates[(i, d)]));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Run manifests

/// Provenance record written alongside every produced file; re-running the
/// recorded command reproduces the outputs byte-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub duration_ms: u64,
}

impl RunManifest {
    pub fn to_json_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("manifest serializes");
        line.push('\n');
        line
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    write_atomic(path, manifest.to_json_line().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gen_dataset, gen_original_dictionary, SynthConfig};

    fn tiny_cfg() -> SynthConfig {
        SynthConfig {
            atoms: 4,
            sample_len: 5,
            components: 2,
            signals: 6,
            atoms_per_signal: 2,
            seed: 9,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn dictionary_roundtrip_is_byte_identical() {
        let dict = gen_original_dictionary(&tiny_cfg()).unwrap();
        let text = render_dictionary(&dict);
        let (_, _, _, blocks) = parse_blocks(&text, "mdl-v1").unwrap();
        let again = render_dictionary(&Dictionary::new(blocks).unwrap());
        assert_eq!(text, again);
    }

    #[test]
    fn dataset_roundtrip_is_byte_identical() {
        let cfg = tiny_cfg();
        let dict = gen_original_dictionary(&cfg).unwrap();
        let (signals, _) = gen_dataset(&dict, &cfg).unwrap();
        let text = render_dataset(&signals).unwrap();
        let (_, _, _, blocks) = parse_blocks(&text, "mds-v1").unwrap();
        assert_eq!(text, render_dataset(&blocks).unwrap());
        for (a, b) in signals.iter().zip(&blocks) {
            assert_eq!(a, b, "values survive the round trip exactly");
        }
    }

    #[test]
    fn block_parser_reports_line_numbers() {
        let bad = "mdl-v1 1 2 2\n1.0 2.0\n1.0 oops\n";
        match parse_blocks(bad, "mdl-v1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let wrong_header = "mds-v1 1 2 2\n";
        assert!(parse_blocks(wrong_header, "mdl-v1").is_err());
        let short = "mdl-v1 2 1 1\n1.0\n";
        assert!(parse_blocks(short, "mdl-v1").is_err());
    }

    #[test]
    fn distance_csv_roundtrip() {
        let labels = vec!["a".to_string(), "with,comma".to_string(), "c".to_string()];
        let d = Mat::from_fn(3, 3, |i, j| (i as f64 - j as f64).abs() * 0.25);
        let text = render_distance_csv(&labels, &d);
        let (parsed_labels, parsed) = parse_distance_csv(&text).unwrap();
        assert_eq!(parsed_labels[1], "with_comma");
        assert_eq!(parsed, d);
        assert_eq!(render_distance_csv(&parsed_labels, &parsed), text);
    }

    #[test]
    fn trace_csv_roundtrip_and_errors() {
        let rows = vec![
            TraceRow {
                iteration: 1,
                metrics: RecoveryMetrics {
                    t99: 0.0,
                    t97: 1.5,
                    wass_chordal: 42.123456789,
                    wass_frob: 50.0,
                    haus_chordal: 10.0,
                    haus_frob: 40.0,
                },
            };
            3
        ];
        let text = render_trace_csv(&rows);
        let parsed = parse_trace_csv(&text).unwrap();
        assert_eq!(parsed.columns.len(), 6);
        assert_eq!(parsed.rows.len(), 3);
        assert!((parsed.rows[0].1[2] - 42.123457).abs() < 1e-9, "six fractional digits");
        assert!(parse_trace_csv("nope\n").is_err());
        assert!(parse_trace_csv("iter,a\n1,2,3\n").is_err());
    }

    #[test]
    fn partition_csv_roundtrip() {
        let p = Partition::new(&[0, 1, 0, 2], Some(vec![0, 1, 3])).unwrap();
        let text = render_partition_csv(&p);
        let parsed = parse_partition_csv(&text).unwrap();
        assert_eq!(parsed.labels(), p.labels());
        assert!(parse_partition_csv("index,label,exemplar\n0,0,0\n2,1,2\n").is_err());
    }

    #[test]
    fn atomic_write_creates_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "hello");
        assert!(!path.with_extension("txt.tmp").exists());
    }

    #[test]
    fn manifest_serializes() {
        let m = RunManifest {
            command: "gen".into(),
            args: vec!["--atoms".into(), "4".into()],
            seed: Some(7),
            inputs: vec![],
            outputs: vec!["x.mdl".into()],
            version: "0.1.0".into(),
            duration_ms: 12,
        };
        let line = m.to_json_line();
        assert!(line.ends_with('\n'));
        let back: RunManifest = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(back.command, "gen");
        assert_eq!(back.seed, Some(7));
    }
}
