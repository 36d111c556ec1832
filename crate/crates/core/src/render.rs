//! Grid masks of a selection, as text or binary PGM.

use crate::error::{Error, Result};
use crate::selection::SelectionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskFormat {
    /// `h` lines of `w` characters, `#` selected and `.` not, lines joined by `\n`.
    Text,
    /// Binary PGM (P5), 255 selected and 0 not.
    Pgm,
}

impl MaskFormat {
    /// `.pgm` selects PGM, anything else text.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => MaskFormat::Pgm,
            _ => MaskFormat::Text,
        }
    }
}

fn mask(selection: &SelectionResult, grid: (usize, usize)) -> Result<Vec<bool>> {
    let n = grid.0 * grid.1;
    let mut cells = vec![false; n];
    for &i in &selection.indices {
        *cells
            .get_mut(i)
            .ok_or(Error::IndexOutOfRange { index: i, n })? = true;
    }
    Ok(cells)
}

pub fn render_mask(
    selection: &SelectionResult,
    grid: (usize, usize),
    format: MaskFormat,
) -> Result<Vec<u8>> {
    let (h, w) = grid;
    let cells = mask(selection, grid)?;
    Ok(match format {
        MaskFormat::Text => {
            let rows: Vec<String> = cells
                .chunks(w.max(1))
                .take(h)
                .map(|row| row.iter().map(|&s| if s { '#' } else { '.' }).collect())
                .collect();
            rows.join("\n").into_bytes()
        }
        MaskFormat::Pgm => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend(cells.iter().map(|&s| if s { 255u8 } else { 0 }));
            out
        }
    })
}
