use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::logic::dnf::DnfExpression;
use crate::logic::expr::Assignment;
use crate::logic::parse::parse;
use crate::{Error, Result};

/// Writes one labeled expression per line: `<canonical-text>\t<0|1>`.
/// Every expression must carry a label.
pub fn save_expressions(path: &Path, exprs: &[DnfExpression]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, d) in exprs.iter().enumerate() {
        let label = d.label.ok_or_else(|| Error::Data {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expression has no label".into(),
        })?;
        writeln!(w, "{}\t{}", d.to_tree().render(), u8::from(label))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `<expr>\t<0|1>` dataset, recovering clause structure from the
/// expression text. Blank lines are skipped.
pub fn load_expressions(path: &Path) -> Result<Vec<DnfExpression>> {
    let data_err = |line: usize, message: String| Error::Data {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (text, label) = line
            .split_once('\t')
            .ok_or_else(|| data_err(lineno, "expected <expr><TAB><label>".into()))?;
        let label = match label.trim() {
            "0" => false,
            "1" => true,
            other => return Err(data_err(lineno, format!("label must be 0 or 1, got {other:?}"))),
        };
        let expr = parse(text).map_err(|e| data_err(lineno, e.to_string()))?;
        let dnf = DnfExpression::from_tree(&expr)
            .map_err(|e| data_err(lineno, e.to_string()))?;
        out.push(dnf.with_label(label));
    }
    Ok(out)
}

/// Writes `<id>\t<0|1>` lines for variables `0..len`.
pub fn save_assignment(path: &Path, a: &Assignment) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, &v) in a.values().iter().enumerate() {
        writeln!(w, "{}\t{}", id, u8::from(v))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an assignment file; ids must cover `0..n` exactly once.
pub fn load_assignment(path: &Path) -> Result<Assignment> {
    let data_err = |line: usize, message: String| Error::Data {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut entries: Vec<(u32, bool)> = Vec::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, value) = line
            .split_once('\t')
            .ok_or_else(|| data_err(lineno, "expected <id><TAB><0|1>".into()))?;
        let id: u32 = id
            .trim()
            .parse()
            .map_err(|_| data_err(lineno, format!("bad variable id {id:?}")))?;
        let value = match value.trim() {
            "0" => false,
            "1" => true,
            other => return Err(data_err(lineno, format!("value must be 0 or 1, got {other:?}"))),
        };
        entries.push((id, value));
    }
    let n = entries.len();
    let mut values = vec![None; n];
    for (id, v) in entries {
        let slot = values
            .get_mut(id as usize)
            .ok_or_else(|| data_err(0, format!("variable id {id} out of range for {n} entries")))?;
        if slot.replace(v).is_some() {
            return Err(data_err(0, format!("variable id {id} appears twice")));
        }
    }
    Ok(Assignment::new(values.into_iter().flatten().collect()))
}
