//! TSV ingestion and emission: z-score files, p-value files with optional
//! signs, and correlation matrices.
//!
//! Layout contract: tab-separated; the first z-score/p-value header field
//! is `snp_id` followed by the trait names; each data row is an id and one
//! decimal value per trait. Rows with a missing or non-finite value are
//! dropped and counted, never imputed.

use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::block::ZScoreBlock;
use crate::corr::{regularize_psd, CorrelationSource, TraitCorrelation, PSD_FLOOR};
use crate::error::{Error, Result};
use crate::stats::normal_two_sided_quantile;

/// Default number of SNP rows per streamed block.
pub const DEFAULT_BLOCK_SIZE: usize = 4096;

/// Format a p-value with 12 significant digits in scientific notation.
pub fn format_pvalue(p: f64) -> String {
    format!("{p:.11e}")
}

fn open_lines(path: &Path) -> Result<Lines<BufReader<File>>> {
    Ok(BufReader::new(File::open(path)?).lines())
}

fn parse_header(path: &Path, line: Option<std::io::Result<String>>) -> Result<Vec<String>> {
    let name = path.display().to_string();
    let line = match line {
        None => return Err(Error::EmptyFile { path: name }),
        Some(l) => l?,
    };
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
    if fields.len() < 2 {
        return Err(Error::MalformedHeader {
            path: name,
            reason: "need `snp_id` plus at least one trait column".into(),
        });
    }
    if fields[0] != "snp_id" {
        return Err(Error::MalformedHeader {
            path: name,
            reason: format!("first header field must be `snp_id`, got `{}`", fields[0]),
        });
    }
    Ok(fields[1..].iter().map(|s| s.to_string()).collect())
}

/// One parsed data row, or a drop/skip signal.
enum RowOutcome {
    Data(String, Vec<f64>),
    Dropped,
    Comment,
}

fn parse_row(
    path: &Path,
    lineno: usize,
    line: &str,
    expected: usize,
    values_valid: impl Fn(f64) -> bool,
) -> Result<RowOutcome> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.is_empty() || line.starts_with('#') {
        return Ok(RowOutcome::Comment);
    }
    let mut fields = line.split('\t');
    let id = fields.next().unwrap_or("");
    let mut values = Vec::with_capacity(expected);
    let mut missing = false;
    let mut found = 1usize;
    for field in fields {
        found += 1;
        match field.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && values_valid(v) => values.push(v),
            Ok(_) | Err(_) => missing = true,
        }
    }
    if found != expected + 1 {
        return Err(Error::RowWidthMismatch {
            path: path.display().to_string(),
            line: lineno,
            expected: expected + 1,
            found,
        });
    }
    if missing {
        return Ok(RowOutcome::Dropped);
    }
    Ok(RowOutcome::Data(id.to_string(), values))
}

/// Streaming block reader over a z-score TSV file.
pub struct ZScoreReader {
    path: std::path::PathBuf,
    lines: Lines<BufReader<File>>,
    trait_names: Vec<String>,
    block_size: usize,
    lineno: usize,
    dropped: usize,
    yielded_rows: usize,
}

impl ZScoreReader {
    pub fn open(path: &Path, block_size: usize) -> Result<Self> {
        assert!(block_size >= 1);
        let mut lines = open_lines(path)?;
        let trait_names = parse_header(path, lines.next())?;
        Ok(Self {
            path: path.to_path_buf(),
            lines,
            trait_names,
            block_size,
            lineno: 1,
            dropped: 0,
            yielded_rows: 0,
        })
    }

    pub fn trait_names(&self) -> &[String] {
        &self.trait_names
    }

    /// Rows dropped so far because of missing or non-finite fields.
    pub fn dropped_rows(&self) -> usize {
        self.dropped
    }

    fn next_block(&mut self) -> Result<Option<ZScoreBlock>> {
        let t = self.trait_names.len();
        let mut ids = Vec::with_capacity(self.block_size);
        let mut flat = Vec::with_capacity(self.block_size * t);
        while ids.len() < self.block_size {
            let Some(line) = self.lines.next() else { break };
            let line = line?;
            self.lineno += 1;
            match parse_row(&self.path, self.lineno, &line, t, |_| true)? {
                RowOutcome::Comment => {}
                RowOutcome::Dropped => self.dropped += 1,
                RowOutcome::Data(id, values) => {
                    ids.push(id);
                    flat.extend(values);
                }
            }
        }
        if ids.is_empty() {
            if self.yielded_rows == 0 && self.dropped == 0 {
                return Err(Error::EmptyFile { path: self.path.display().to_string() });
            }
            return Ok(None);
        }
        self.yielded_rows += ids.len();
        let n = ids.len();
        let z = DMatrix::from_row_slice(n, t, &flat);
        Ok(Some(ZScoreBlock::new(ids, z, self.trait_names.clone())?))
    }
}

impl Iterator for ZScoreReader {
    type Item = Result<ZScoreBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_block().transpose()
    }
}

/// Streaming reader over a p-value TSV file (plus optional sign file),
/// yielding z-score blocks via `z = quantile(p) * sign`.
pub struct PValueReader {
    path: std::path::PathBuf,
    lines: Lines<BufReader<File>>,
    signs: Option<(std::path::PathBuf, Lines<BufReader<File>>)>,
    trait_names: Vec<String>,
    block_size: usize,
    lineno: usize,
    dropped: usize,
    yielded_rows: usize,
}

impl PValueReader {
    pub fn open(path: &Path, signs: Option<&Path>, block_size: usize) -> Result<Self> {
        assert!(block_size >= 1);
        let mut lines = open_lines(path)?;
        let trait_names = parse_header(path, lines.next())?;
        let signs = match signs {
            None => None,
            Some(sp) => {
                let mut sl = open_lines(sp)?;
                let snames = parse_header(sp, sl.next())?;
                if snames != trait_names {
                    return Err(Error::ShapeMismatch {
                        reason: "sign file header differs from p-value header".into(),
                    });
                }
                Some((sp.to_path_buf(), sl))
            }
        };
        Ok(Self {
            path: path.to_path_buf(),
            lines,
            signs,
            trait_names,
            block_size,
            lineno: 1,
            dropped: 0,
            yielded_rows: 0,
        })
    }

    pub fn trait_names(&self) -> &[String] {
        &self.trait_names
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped
    }

    fn next_data_line(&mut self) -> Result<Option<(usize, String)>> {
        loop {
            let Some(line) = self.lines.next() else { return Ok(None) };
            let line = line?;
            self.lineno += 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok(Some((self.lineno, line)));
        }
    }

    fn next_sign_row(&mut self, id: &str) -> Result<Option<Vec<f64>>> {
        let Some((spath, slines)) = self.signs.as_mut() else { return Ok(None) };
        let t = self.trait_names.len();
        loop {
            let Some(line) = slines.next() else {
                return Err(Error::ShapeMismatch {
                    reason: format!("sign file ended before row `{id}`"),
                });
            };
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split('\t');
            let sid = fields.next().unwrap_or("");
            if sid != id {
                return Err(Error::ShapeMismatch {
                    reason: format!("sign row id `{sid}` does not match p-value row `{id}`"),
                });
            }
            let values: Vec<&str> = fields.collect();
            if values.len() != t {
                return Err(Error::ShapeMismatch {
                    reason: format!("sign row `{sid}` has {} fields, expected {t}", values.len()),
                });
            }
            let mut signs = Vec::with_capacity(t);
            for v in values {
                match v.trim().parse::<f64>() {
                    Ok(s) if s == 1.0 || s == -1.0 => signs.push(s),
                    _ => {
                        return Err(Error::FileParse {
                            path: spath.display().to_string(),
                            line: 0,
                            reason: format!("sign entries must be +1 or -1, got `{v}`"),
                        })
                    }
                }
            }
            return Ok(Some(signs));
        }
    }

    fn next_block(&mut self) -> Result<Option<ZScoreBlock>> {
        let t = self.trait_names.len();
        let mut ids = Vec::with_capacity(self.block_size);
        let mut flat = Vec::with_capacity(self.block_size * t);
        while ids.len() < self.block_size {
            let Some((lineno, line)) = self.next_data_line()? else { break };
            match parse_row(&self.path, lineno, &line, t, |_| true)? {
                RowOutcome::Comment => {}
                RowOutcome::Dropped => {
                    self.dropped += 1;
                    // Keep the sign file in lockstep even for dropped rows.
                    let id = line.split('\t').next().unwrap_or("").to_string();
                    self.next_sign_row(&id)?;
                }
                RowOutcome::Data(id, pvalues) => {
                    for (col, &p) in pvalues.iter().enumerate() {
                        if !(p > 0.0 && p <= 1.0) {
                            let _ = col;
                            return Err(Error::OutOfRangeP {
                                path: self.path.display().to_string(),
                                line: lineno,
                                value: p,
                            });
                        }
                    }
                    let signs = self.next_sign_row(&id)?;
                    for (j, &p) in pvalues.iter().enumerate() {
                        let clamped = crate::clamp_pvalue(p);
                        let z = normal_two_sided_quantile(clamped);
                        let sign = signs.as_ref().map(|s| s[j]).unwrap_or(1.0);
                        flat.push(z * sign);
                    }
                    ids.push(id);
                }
            }
        }
        if ids.is_empty() {
            if self.yielded_rows == 0 && self.dropped == 0 {
                return Err(Error::EmptyFile { path: self.path.display().to_string() });
            }
            return Ok(None);
        }
        self.yielded_rows += ids.len();
        let n = ids.len();
        let z = DMatrix::from_row_slice(n, t, &flat);
        Ok(Some(ZScoreBlock::new(ids, z, self.trait_names.clone())?))
    }
}

impl Iterator for PValueReader {
    type Item = Result<ZScoreBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_block().transpose()
    }
}

/// Stream a z-score file in blocks of `block_size` SNPs.
pub fn parse_zscore_file(path: &Path, block_size: usize) -> Result<ZScoreReader> {
    ZScoreReader::open(path, block_size)
}

/// Stream a p-value file (optional sign companion) as z-score blocks.
pub fn parse_pvalue_file(
    path: &Path,
    signs: Option<&Path>,
    block_size: usize,
) -> Result<PValueReader> {
    PValueReader::open(path, signs, block_size)
}

/// A correlation matrix file: header row of trait names, then a square
/// block of values.
pub struct ParsedCorr {
    pub corr: TraitCorrelation,
    pub trait_names: Vec<String>,
}

/// Parse, symmetrize if needed, and PSD-repair an external correlation matrix.
pub fn parse_corr_file(path: &Path) -> Result<ParsedCorr> {
    let name = path.display().to_string();
    let mut lines = open_lines(path)?;
    let header = match lines.next() {
        None => return Err(Error::EmptyFile { path: name }),
        Some(l) => l?,
    };
    let trait_names: Vec<String> = header
        .trim_end_matches(['\r', '\n'])
        .split('\t')
        .map(|s| s.to_string())
        .collect();
    let t = trait_names.len();
    if t == 0 || trait_names.iter().any(|n| n.is_empty()) {
        return Err(Error::MalformedHeader { path: name, reason: "empty trait name".into() });
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut lineno = 1usize;
    for line in lines {
        let line = line?;
        lineno += 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != t {
            return Err(Error::NotSquare { rows: fields.len(), cols: t });
        }
        let mut row = Vec::with_capacity(t);
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::FileParse {
                path: name.clone(),
                line: lineno,
                reason: format!("cannot parse `{f}` as a number"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() != t {
        return Err(Error::NotSquare { rows: rows.len(), cols: t });
    }
    let mut m = DMatrix::zeros(t, t);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    let raw = TraitCorrelation::from_matrix(m, CorrelationSource::External)?;
    let corr = regularize_psd(raw, PSD_FLOOR)?;
    Ok(ParsedCorr { corr, trait_names })
}

/// Write a correlation matrix with its trait-name header.
pub fn write_corr_file(path: &Path, trait_names: &[String], r: &DMatrix<f64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "{}", trait_names.join("\t"))?;
    for i in 0..r.nrows() {
        let row: Vec<String> = (0..r.ncols()).map(|j| format!("{:.16e}", r[(i, j)])).collect();
        writeln!(f, "{}", row.join("\t"))?;
    }
    Ok(())
}

/// Write a z-score block stream to a TSV file.
pub fn write_zscore_file(path: &Path, block: &ZScoreBlock) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "snp_id\t{}", block.trait_names.join("\t"))?;
    for i in 0..block.n_snps() {
        let mut line = block.snp_ids[i].clone();
        for j in 0..block.n_traits() {
            line.push('\t');
            line.push_str(&format!("{:.16e}", block.z[(i, j)]));
        }
        writeln!(f, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::af::two_sided_pvalues;
    use approx::assert_abs_diff_eq;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn reads_simple_zscore_file() {
        let f = write_tmp("snp_id\ta\tb\nrs1\t0.0\t0.0\nrs2\t1.5\t-2.0\n");
        let mut reader = parse_zscore_file(f.path(), 10).unwrap();
        let block = reader.next().unwrap().unwrap();
        assert_eq!(block.snp_ids, vec!["rs1", "rs2"]);
        assert_eq!(block.z[(0, 0)], 0.0);
        assert_eq!(block.z[(1, 1)], -2.0);
        assert!(reader.next().is_none());
        assert_eq!(reader.dropped_rows(), 0);
    }

    #[test]
    fn drops_rows_with_missing_values() {
        let f = write_tmp("snp_id\ta\tb\nrs1\tNA\t0.0\nrs2\t1.0\t2.0\nrs3\tinf\t0.1\n");
        let mut reader = parse_zscore_file(f.path(), 10).unwrap();
        let block = reader.next().unwrap().unwrap();
        assert_eq!(block.snp_ids, vec!["rs2"]);
        assert!(reader.next().is_none());
        assert_eq!(reader.dropped_rows(), 2);
    }

    #[test]
    fn row_width_mismatch_is_an_error() {
        let f = write_tmp("snp_id\ta\tb\nrs1\t0.5\n");
        let mut reader = parse_zscore_file(f.path(), 10).unwrap();
        match reader.next().unwrap() {
            Err(Error::RowWidthMismatch { line, expected, found, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(expected, 3);
                assert_eq!(found, 2);
            }
            other => panic!("expected RowWidthMismatch, got {other:?}"),
        }
    }

    #[test]
    fn header_and_empty_errors() {
        let f = write_tmp("id\ta\tb\nrs1\t0\t0\n");
        assert!(matches!(
            parse_zscore_file(f.path(), 8),
            Err(Error::MalformedHeader { .. })
        ));
        let f = write_tmp("");
        assert!(matches!(parse_zscore_file(f.path(), 8), Err(Error::EmptyFile { .. })));
        let f = write_tmp("snp_id\ta\n");
        let mut reader = parse_zscore_file(f.path(), 8).unwrap();
        assert!(matches!(reader.next(), Some(Err(Error::EmptyFile { .. }))));
    }

    #[test]
    fn blocks_respect_size() {
        let mut content = String::from("snp_id\ta\n");
        for i in 0..10 {
            content.push_str(&format!("rs{i}\t{}.0\n", i));
        }
        let f = write_tmp(&content);
        let reader = parse_zscore_file(f.path(), 4).unwrap();
        let sizes: Vec<usize> = reader.map(|b| b.unwrap().n_snps()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn pvalue_conversion_round_trip() {
        let f = write_tmp("snp_id\ta\tb\nrs1\t1.0\t0.05\nrs2\t0.5\t1e-12\n");
        let mut reader = parse_pvalue_file(f.path(), None, 8).unwrap();
        let block = reader.next().unwrap().unwrap();
        assert_eq!(block.z[(0, 0)], 0.0);
        assert_abs_diff_eq!(block.z[(0, 1)], 1.959964, epsilon = 1e-6);
        // Round trip to 1e-10.
        for (i, expected) in [(0usize, [1.0, 0.05]), (1usize, [0.5, 1e-12])] {
            let row: Vec<f64> = (0..2).map(|j| block.z[(i, j)]).collect();
            let back = two_sided_pvalues(&row);
            for (b, e) in back.iter().zip(expected.iter()) {
                assert!((b - e).abs() <= 1e-10 * e.max(1e-10), "{b} vs {e}");
            }
        }
    }

    #[test]
    fn pvalue_range_and_signs() {
        let f = write_tmp("snp_id\ta\nrs1\t1.5\n");
        let mut reader = parse_pvalue_file(f.path(), None, 8).unwrap();
        assert!(matches!(reader.next(), Some(Err(Error::OutOfRangeP { .. }))));

        let pf = write_tmp("snp_id\ta\tb\nrs1\t0.05\t0.5\n");
        let sf = write_tmp("snp_id\ta\tb\nrs1\t-1\t1\n");
        let mut reader = parse_pvalue_file(pf.path(), Some(sf.path()), 8).unwrap();
        let block = reader.next().unwrap().unwrap();
        assert_abs_diff_eq!(block.z[(0, 0)], -1.959964, epsilon = 1e-6);
        assert!(block.z[(0, 1)] > 0.0);

        let bad_sign = write_tmp("snp_id\ta\tb\nrs1\t-1\t2\n");
        let mut reader = parse_pvalue_file(pf.path(), Some(bad_sign.path()), 8).unwrap();
        assert!(reader.next().unwrap().is_err());

        let short = write_tmp("snp_id\ta\tb\n");
        let mut reader = parse_pvalue_file(pf.path(), Some(short.path()), 8).unwrap();
        assert!(matches!(reader.next(), Some(Err(Error::ShapeMismatch { .. }))));
    }

    #[test]
    fn corr_file_round_trip_and_checks() {
        let f = write_tmp("a\tb\n1.0\t0.3\n0.3\t1.0\n");
        let parsed = parse_corr_file(f.path()).unwrap();
        assert_eq!(parsed.trait_names, vec!["a", "b"]);
        assert!(!parsed.corr.repaired);
        assert_eq!(parsed.corr.r[(0, 1)], 0.3);

        // Asymmetric beyond 1e-12 gets symmetrized and flagged.
        let f = write_tmp("a\tb\n1.0\t0.3\n0.30000001\t1.0\n");
        let parsed = parse_corr_file(f.path()).unwrap();
        assert!(parsed.corr.repaired);
        assert_abs_diff_eq!(parsed.corr.r[(0, 1)], 0.300000005, epsilon = 1e-12);

        let f = write_tmp("a\tb\n1.0\t0.3\n");
        assert!(matches!(parse_corr_file(f.path()), Err(Error::NotSquare { .. })));

        let f = write_tmp("a\tb\n1.0\tx\n0.3\t1.0\n");
        assert!(matches!(parse_corr_file(f.path()), Err(Error::FileParse { .. })));
    }

    #[test]
    fn corr_writer_round_trips() {
        let r = crate::sim::cs_matrix(4, 0.42).unwrap();
        let names = crate::sim::default_trait_names(4);
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_corr_file(tmp.path(), &names, &r.r).unwrap();
        let parsed = parse_corr_file(tmp.path()).unwrap();
        assert_eq!(parsed.trait_names, names);
        assert_eq!(parsed.corr.r, r.r);
    }
}
