use std::path::Path;

use proxdiv::Sample;

use crate::CliError;

/// Parses one number per line. Blank lines and text after '#' are ignored.
pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        match body.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => return Err(CliError::Usage(format!("line {}: '{body}' is not a finite number", i + 1))),
        }
    }
    if values.len() < 2 {
        return Err(CliError::Usage(format!("need at least 2 observations, found {}", values.len())));
    }
    Ok(values)
}

pub fn read_sample(path: &Path) -> Result<Sample, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io_err(path, e))?;
    let values = parse_values(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Sample::from_values(values).map_err(|e| CliError::Usage(e.to_string()))
}
