//! Streaming analysis pipeline: a reader thread feeds SNP blocks through a
//! bounded queue to stateless workers; a single writer restores input
//! order, so outputs are byte-identical for any worker count.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::baselines::Method;
use crate::block::ZScoreBlock;
use crate::config::config_hash;
use crate::corr::CorrAccumulator;
use crate::engine::AnalysisEngine;
use crate::error::{Error, Result};
use crate::io::{format_pvalue, parse_corr_file, parse_pvalue_file, parse_zscore_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    ZScores,
    PValues,
}

impl InputKind {
    pub fn name(&self) -> &'static str {
        match self {
            InputKind::ZScores => "zscores",
            InputKind::PValues => "pvalues",
        }
    }
}

/// Everything one analysis run needs; recorded in the output header
/// (except the worker count, which must not affect output bytes).
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub input: PathBuf,
    pub input_kind: InputKind,
    pub signs: Option<PathBuf>,
    pub corr: Option<PathBuf>,
    pub methods: Vec<Method>,
    /// Significance threshold used for the summary counts.
    pub alpha: f64,
    pub block_size: usize,
    pub workers: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunManifest {
    /// Canonical key-value rendering of the determinism-relevant fields.
    pub fn recorded_config(&self) -> String {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let mut s = String::new();
        s.push_str(&format!("alpha = {:e}\n", self.alpha));
        s.push_str(&format!("block_size = {}\n", self.block_size));
        if let Some(c) = &self.corr {
            s.push_str(&format!("corr = {}\n", c.display()));
        }
        s.push_str(&format!("input = {}\n", self.input.display()));
        s.push_str(&format!("input_kind = {}\n", self.input_kind.name()));
        s.push_str(&format!("methods = {}\n", methods.join(",")));
        s.push_str(&format!("seed = {}\n", self.seed));
        if let Some(p) = &self.signs {
            s.push_str(&format!("signs = {}\n", p.display()));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub n_snps: usize,
    pub dropped_rows: usize,
    pub blocks: usize,
    pub significant: Vec<(Method, usize)>,
    pub wall: Duration,
}

enum InputReader {
    Z(crate::io::ZScoreReader),
    P(crate::io::PValueReader),
}

impl InputReader {
    fn open(manifest: &RunManifest) -> Result<Self> {
        match manifest.input_kind {
            InputKind::ZScores => {
                Ok(InputReader::Z(parse_zscore_file(&manifest.input, manifest.block_size)?))
            }
            InputKind::PValues => Ok(InputReader::P(parse_pvalue_file(
                &manifest.input,
                manifest.signs.as_deref(),
                manifest.block_size,
            )?)),
        }
    }

    fn trait_names(&self) -> &[String] {
        match self {
            InputReader::Z(r) => r.trait_names(),
            InputReader::P(r) => r.trait_names(),
        }
    }

    fn dropped_rows(&self) -> usize {
        match self {
            InputReader::Z(r) => r.dropped_rows(),
            InputReader::P(r) => r.dropped_rows(),
        }
    }
}

impl Iterator for InputReader {
    type Item = Result<ZScoreBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            InputReader::Z(r) => r.next(),
            InputReader::P(r) => r.next(),
        }
    }
}

struct ScoredBlock {
    ids: Vec<String>,
    pvalues: Vec<Vec<f64>>,
}

fn score_block(engine: &AnalysisEngine, methods: &[Method], block: &ZScoreBlock) -> ScoredBlock {
    let t = block.n_traits();
    let mut row = vec![0.0f64; t];
    let mut pvalues = Vec::with_capacity(block.n_snps());
    for i in 0..block.n_snps() {
        for (tt, slot) in row.iter_mut().enumerate() {
            *slot = block.z[(i, tt)];
        }
        let mut out = Vec::with_capacity(methods.len());
        engine.score_row_into(&row, methods, &mut out);
        pvalues.push(out);
    }
    ScoredBlock { ids: block.snp_ids.clone(), pvalues }
}

/// Build the analysis engine for a run: either from the supplied
/// correlation file (trait order must match the input header exactly) or
/// from a streaming sample-correlation pass over the input itself.
fn resolve_engine(manifest: &RunManifest, trait_names: &[String]) -> Result<AnalysisEngine> {
    match &manifest.corr {
        Some(path) => {
            let parsed = parse_corr_file(path)?;
            if parsed.trait_names != trait_names {
                return Err(Error::TraitNameMismatch {
                    reason: format!(
                        "correlation file has [{}], input has [{}]",
                        parsed.trait_names.join(","),
                        trait_names.join(",")
                    ),
                });
            }
            AnalysisEngine::from_correlation(parsed.corr)
        }
        None => {
            let mut acc = CorrAccumulator::new(trait_names.len());
            let reader = InputReader::open(manifest)?;
            for block in reader {
                acc.push(&block?.z);
            }
            AnalysisEngine::from_correlation(acc.finish(trait_names)?)
        }
    }
}

/// Run the full analysis and write the results file.
pub fn run_analysis(manifest: &RunManifest) -> Result<RunSummary> {
    let start = Instant::now();
    let mut reader = InputReader::open(manifest)?;
    let trait_names: Vec<String> = reader.trait_names().to_vec();
    let engine = Arc::new(resolve_engine(manifest, &trait_names)?);

    let out_file = std::fs::File::create(&manifest.out)?;
    let mut out = std::io::BufWriter::new(out_file);
    write_header(&mut out, manifest, trait_names.len())?;

    let methods = manifest.methods.clone();
    let mut significant = vec![0usize; methods.len()];
    let mut n_snps = 0usize;
    let mut blocks = 0usize;

    let mut write_scored = |out: &mut dyn Write, scored: ScoredBlock| -> Result<()> {
        for (id, ps) in scored.ids.iter().zip(scored.pvalues.iter()) {
            let mut line = id.clone();
            for (m, &p) in ps.iter().enumerate() {
                line.push('\t');
                line.push_str(&format_pvalue(p));
                if p <= manifest.alpha {
                    significant[m] += 1;
                }
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        n_snps += scored.ids.len();
        blocks += 1;
        Ok(())
    };

    let workers = manifest.workers.max(1);
    let dropped_rows;
    if workers == 1 {
        for block in reader.by_ref() {
            let scored = score_block(&engine, &methods, &block?);
            write_scored(&mut out, scored)?;
        }
        dropped_rows = reader.dropped_rows();
    } else {
        let pipeline = run_parallel(reader, engine.clone(), &methods, workers, &mut |scored| {
            write_scored(&mut out, scored)
        });
        match pipeline {
            Ok(d) => dropped_rows = d,
            Err(e) => {
                // Partial-output marker so downstream tooling can tell a
                // truncated file from a complete one.
                let _ = writeln!(out, "# PARTIAL OUTPUT: {e}");
                let _ = out.flush();
                return Err(e);
            }
        }
    }

    writeln!(out, "# snps: {n_snps}")?;
    writeln!(out, "# dropped-rows: {dropped_rows}")?;
    let sig: Vec<String> = methods
        .iter()
        .zip(significant.iter())
        .map(|(m, c)| format!("{}={c}", m.name()))
        .collect();
    writeln!(out, "# significant(alpha={:e}): {}", manifest.alpha, sig.join(","))?;
    out.flush()?;

    Ok(RunSummary {
        n_snps,
        dropped_rows,
        blocks,
        significant: methods.iter().cloned().zip(significant).collect(),
        wall: start.elapsed(),
    })
}

type BlockMsg = (usize, Result<ZScoreBlock>);
type ScoredMsg = (usize, std::result::Result<ScoredBlock, Error>);

fn run_parallel(
    reader: InputReader,
    engine: Arc<AnalysisEngine>,
    methods: &[Method],
    workers: usize,
    write_scored: &mut dyn FnMut(ScoredBlock) -> Result<()>,
) -> Result<usize> {
    let queue_cap = workers * 2;
    let (work_tx, work_rx) = sync_channel::<BlockMsg>(queue_cap);
    let (done_tx, done_rx) = sync_channel::<ScoredMsg>(queue_cap);
    let work_rx = Arc::new(Mutex::new(work_rx));

    std::thread::scope(|scope| -> Result<usize> {
        let reader_handle = scope.spawn(move || -> usize {
            let mut reader = reader;
            let mut idx = 0usize;
            loop {
                let Some(item) = reader.next() else { break };
                let failed = item.is_err();
                if work_tx.send((idx, item)).is_err() {
                    break;
                }
                idx += 1;
                if failed {
                    break;
                }
            }
            drop(work_tx);
            reader.dropped_rows()
        });

        for _ in 0..workers {
            let work_rx = Arc::clone(&work_rx);
            let done_tx = done_tx.clone();
            let engine = Arc::clone(&engine);
            let methods = methods.to_vec();
            scope.spawn(move || loop {
                let item = { work_rx.lock().expect("work queue poisoned").recv() };
                let Ok((idx, block)) = item else { break };
                let scored = match block {
                    Err(e) => Err(e),
                    Ok(block) => {
                        std::panic::catch_unwind(AssertUnwindSafe(|| {
                            score_block(&engine, &methods, &block)
                        }))
                        .map_err(|_| Error::WorkerPanic { block: idx })
                    }
                };
                if done_tx.send((idx, scored)).is_err() {
                    break;
                }
            });
        }
        drop(done_tx);

        let mut pending: BTreeMap<usize, ScoredBlock> = BTreeMap::new();
        let mut next = 0usize;
        let mut first_error: Option<Error> = None;
        for (idx, scored) in done_rx.iter() {
            match scored {
                Err(e) => {
                    first_error = Some(e);
                    break;
                }
                Ok(s) => {
                    pending.insert(idx, s);
                    while let Some(s) = pending.remove(&next) {
                        write_scored(s)?;
                        next += 1;
                    }
                }
            }
        }
        // Drain the work queue so worker threads can exit if we bailed early.
        if first_error.is_some() {
            let rx = work_rx.lock().expect("work queue poisoned");
            while rx.try_recv().is_ok() {}
        }
        let dropped = reader_handle.join().map_err(|_| Error::WorkerPanic { block: 0 })?;
        match first_error {
            Some(e) => Err(e),
            None => Ok(dropped),
        }
    })
}

fn write_header(out: &mut impl Write, manifest: &RunManifest, t: usize) -> Result<()> {
    let recorded = manifest.recorded_config();
    writeln!(out, "# mtafs results")?;
    writeln!(out, "# version: {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# config-hash: {}", config_hash(&recorded))?;
    for line in recorded.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(
        out,
        "# corr-source: {}",
        match &manifest.corr {
            Some(p) => format!("file:{}", p.display()),
            None => "sample-correlation".to_string(),
        }
    )?;
    writeln!(out, "# traits: {t}")?;
    let header: Vec<&str> = manifest.methods.iter().map(|m| m.name()).collect();
    writeln!(out, "snp_id\t{}", header.join("\t"))?;
    Ok(())
}

/// Parse a results file back into per-method p-value columns.
///
/// Comment lines are skipped anywhere in the file; used by tests and by
/// downstream tooling that wants to re-read emitted tables.
pub fn parse_results_file(path: &Path) -> Result<(Vec<String>, Vec<(String, Vec<f64>)>)> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut methods: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match &methods {
            None => {
                if fields.first() != Some(&"snp_id") {
                    return Err(Error::MalformedHeader {
                        path: name,
                        reason: "results header must start with snp_id".into(),
                    });
                }
                methods = Some(fields[1..].iter().map(|s| s.to_string()).collect());
            }
            Some(m) => {
                if fields.len() != m.len() + 1 {
                    return Err(Error::RowWidthMismatch {
                        path: name,
                        line: lineno + 1,
                        expected: m.len() + 1,
                        found: fields.len(),
                    });
                }
                let ps = fields[1..]
                    .iter()
                    .map(|f| {
                        f.parse::<f64>().map_err(|_| Error::FileParse {
                            path: name.clone(),
                            line: lineno + 1,
                            reason: format!("bad p-value `{f}`"),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push((fields[0].to_string(), ps));
            }
        }
    }
    let methods = methods.ok_or(Error::EmptyFile { path: path.display().to_string() })?;
    Ok((methods, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{cs_matrix, simulate_zblock};
    use nalgebra::DVector;

    fn manifest(input: &Path, out: &Path, workers: usize) -> RunManifest {
        RunManifest {
            input: input.to_path_buf(),
            input_kind: InputKind::ZScores,
            signs: None,
            corr: None,
            methods: vec![Method::Mtafs, Method::Sum, Method::Cauchy],
            alpha: 5e-8,
            block_size: 16,
            workers,
            seed: 0,
            out: out.to_path_buf(),
        }
    }

    #[test]
    fn zero_block_gives_unit_pvalues() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("z.tsv");
        let mut content = String::from("snp_id\tt1\tt2\tt3\n");
        for i in 0..3 {
            content.push_str(&format!("rs{i}\t0.0\t0.0\t0.0\n"));
        }
        // A correlation estimated from all-zero rows is degenerate, so
        // supply one.
        std::fs::write(&input, content).unwrap();
        let corr_path = dir.path().join("corr.tsv");
        let r = cs_matrix(3, 0.3).unwrap();
        crate::io::write_corr_file(
            &corr_path,
            &["t1".into(), "t2".into(), "t3".into()],
            &r.r,
        )
        .unwrap();
        let out = dir.path().join("out.tsv");
        let mut m = manifest(&input, &out, 1);
        m.corr = Some(corr_path);
        let summary = run_analysis(&m).unwrap();
        assert_eq!(summary.n_snps, 3);
        let (methods, rows) = parse_results_file(&out).unwrap();
        assert_eq!(methods, vec!["mtafs", "sum", "cauchy"]);
        for (_, ps) in rows {
            assert_eq!(ps[0], 1.0);
            assert_eq!(ps[1], 1.0);
            assert_eq!(ps[2], 0.5);
        }
    }

    #[test]
    fn worker_counts_produce_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let r = cs_matrix(5, 0.4).unwrap();
        let block = simulate_zblock(&DVector::zeros(5), &r, 200, 11).unwrap();
        let input = dir.path().join("z.tsv");
        crate::io::write_zscore_file(&input, &block).unwrap();

        let out1 = dir.path().join("out1.tsv");
        let out4 = dir.path().join("out4.tsv");
        run_analysis(&manifest(&input, &out1, 1)).unwrap();
        run_analysis(&manifest(&input, &out4, 4)).unwrap();
        let b1 = std::fs::read(&out1).unwrap();
        let b4 = std::fs::read(&out4).unwrap();
        assert_eq!(b1, b4);
    }

    #[test]
    fn trait_name_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("z.tsv");
        std::fs::write(&input, "snp_id\ta\tb\nrs1\t0.1\t0.2\nrs2\t0.3\t0.4\n").unwrap();
        let corr_path = dir.path().join("corr.tsv");
        std::fs::write(&corr_path, "b\ta\n1.0\t0.0\n0.0\t1.0\n").unwrap();
        let out = dir.path().join("out.tsv");
        let mut m = manifest(&input, &out, 1);
        m.corr = Some(corr_path);
        assert!(matches!(run_analysis(&m), Err(Error::TraitNameMismatch { .. })));
    }

    #[test]
    fn results_round_trip_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let r = cs_matrix(4, 0.3).unwrap();
        let block = simulate_zblock(&DVector::zeros(4), &r, 50, 3).unwrap();
        let input = dir.path().join("z.tsv");
        crate::io::write_zscore_file(&input, &block).unwrap();
        let out = dir.path().join("out.tsv");
        let m = manifest(&input, &out, 2);
        run_analysis(&m).unwrap();
        let (_, rows) = parse_results_file(&out).unwrap();
        assert_eq!(rows.len(), 50);
        for (_, ps) in &rows {
            for &p in ps {
                let reformatted: f64 = format_pvalue(p).parse().unwrap();
                assert!((reformatted - p).abs() <= 1e-11 * p.max(1e-300));
            }
        }
    }
}
