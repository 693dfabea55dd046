use std::fs;
use std::path::Path;

use log::warn;

use super::{Dataset, Sample};
use crate::error::{Error, Result};

const PIXELS: usize = 64;
const I_MAX: u8 = 15;

/// Reads the 8×8 digits CSV: 64 integer pixels then the label per row.
///
/// The source corpus uses intensities 0..=16; 16 is clamped to 15 so every
/// pixel fits a 4-bit input, and one warning reports how many were clamped.
pub fn load_digits_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    let mut clamped = 0usize;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != PIXELS + 1 {
            return Err(Error::parse(
                path,
                format!("line {line_no}: expected {} fields, found {}", PIXELS + 1, fields.len()),
            ));
        }
        let mut values = Vec::with_capacity(PIXELS + 1);
        for (col, tok) in fields.iter().enumerate() {
            let v: i64 = tok.parse().map_err(|_| {
                Error::parse(path, format!("line {line_no}, field {}: {tok:?} is not an integer", col + 1))
            })?;
            values.push(v);
        }
        let label = values[PIXELS];
        if !(0..=9).contains(&label) {
            return Err(Error::parse(path, format!("line {line_no}: label {label} not in 0..=9")));
        }
        let mut pixels = Vec::with_capacity(PIXELS);
        for (col, &v) in values[..PIXELS].iter().enumerate() {
            if v < 0 {
                return Err(Error::parse(
                    path,
                    format!("line {line_no}, field {}: negative intensity {v}", col + 1),
                ));
            }
            if v > I_MAX as i64 {
                clamped += 1;
            }
            pixels.push(v.min(I_MAX as i64) as u8);
        }
        samples.push(Sample {
            pixels,
            label: label as u8,
        });
    }
    if clamped > 0 {
        warn!("{}: clamped {clamped} pixel values above {I_MAX}", path.display());
    }
    Dataset::new(samples, I_MAX as u32, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("digits.csv");
        fs::write(&p, content).unwrap();
        (dir, p)
    }

    fn row(pixels: &[i64], label: i64) -> String {
        pixels
            .iter()
            .chain(std::iter::once(&label))
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    #[test]
    fn zeros_row() {
        let (_d, p) = write(&row(&[0; 64], 3));
        let data = load_digits_csv(&p).unwrap();
        assert_eq!(
            data.samples,
            vec![Sample {
                pixels: vec![0; 64],
                label: 3
            }]
        );
        assert_eq!(data.i_max, 15);
    }

    #[test]
    fn sixteen_is_clamped() {
        let mut px = [0i64; 64];
        px[5] = 16;
        let (_d, p) = write(&row(&px, 1));
        let data = load_digits_csv(&p).unwrap();
        assert_eq!(data.samples[0].pixels[5], 15);
    }

    #[test]
    fn short_row_reports_line() {
        let text = format!("{}\n{}\n", row(&[0; 64], 0), row(&[0; 63], 1));
        let (_d, p) = write(&text);
        let err = load_digits_csv(&p).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn bad_tokens() {
        let mut text = row(&[0; 64], 0);
        text = text.replacen('0', "x", 1);
        let (_d, p) = write(&text);
        assert!(load_digits_csv(&p).unwrap_err().to_string().contains("not an integer"));
        let (_d, p) = write(&row(&[0; 64], 10));
        assert!(load_digits_csv(&p).is_err());
    }
}
