//! Capture histories: which labelled unit was caught on which occasion.
//!
//! A history only ever contains observed units. Each unit row is stored as a bit mask
//! over occasions (bit `k` set when the unit was captured on occasion `k`, zero-based),
//! which bounds the number of occasions at 64.
//!
//! CSV layout (header required):
//!
//! ```text
//! unit,stratum,occ_1,occ_2,occ_3
//! A,1,1,1,0
//! B,1,0,1,1
//! C,2,1,1,0
//! ```
//!
//! The stratum column is either filled for every row or empty for every row.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest supported number of occasions.
pub const MAX_OCCASIONS: usize = 64;

/// The original data: captured units and their capture rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CaptureHistory {
    units: Arc<[String]>,
    strata: Option<Arc<[u32]>>,
    rows: Vec<u64>,
    occasions: usize,
}

/// A hypothetical re-assignment of the same units to the same occasions.
pub type Reordering = CaptureHistory;

fn occasion_mask(occasions: usize) -> u64 {
    if occasions == 64 {
        u64::MAX
    } else {
        (1u64 << occasions) - 1
    }
}

impl CaptureHistory {
    /// Builds a validated history from unit labels, row masks and optional 1-based strata.
    pub fn new(
        units: Vec<String>,
        rows: Vec<u64>,
        occasions: usize,
        strata: Option<Vec<u32>>,
    ) -> Result<Self> {
        if occasions == 0 || occasions > MAX_OCCASIONS {
            return Err(Error::Input(format!(
                "number of occasions must be in 1..={MAX_OCCASIONS}, got {occasions}"
            )));
        }
        if units.len() != rows.len() {
            return Err(Error::Input(format!(
                "{} unit labels but {} capture rows",
                units.len(),
                rows.len()
            )));
        }
        let mut seen = HashSet::with_capacity(units.len());
        for label in &units {
            if !seen.insert(label.as_str()) {
                return Err(Error::Input(format!("duplicate unit label `{label}`")));
            }
        }
        let mask = occasion_mask(occasions);
        for (label, &row) in units.iter().zip(&rows) {
            if row & !mask != 0 {
                return Err(Error::Input(format!(
                    "unit `{label}` has captures beyond occasion {occasions}"
                )));
            }
            if row == 0 {
                return Err(Error::Input(format!("unit `{label}` was never captured")));
            }
        }
        if let Some(strata) = &strata {
            if strata.len() != units.len() {
                return Err(Error::Input(format!(
                    "{} stratum labels for {} units",
                    strata.len(),
                    units.len()
                )));
            }
            if let Some(pos) = strata.iter().position(|&g| g == 0) {
                return Err(Error::Input(format!(
                    "unit `{}` has stratum 0; strata are numbered from 1",
                    units[pos]
                )));
            }
        }
        Ok(Self {
            units: units.into(),
            strata: strata.map(Into::into),
            rows,
            occasions,
        })
    }

    /// Builds a history from a dense 0/1 matrix (one inner vector per unit).
    pub fn from_matrix(
        units: Vec<String>,
        matrix: &[Vec<u8>],
        strata: Option<Vec<u32>>,
    ) -> Result<Self> {
        let occasions = matrix.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(matrix.len());
        for (i, cells) in matrix.iter().enumerate() {
            if cells.len() != occasions {
                return Err(Error::Input(format!(
                    "row {} has {} occasions, expected {occasions}",
                    i + 1,
                    cells.len()
                )));
            }
            let mut row = 0u64;
            for (k, &c) in cells.iter().enumerate() {
                match c {
                    0 => {}
                    1 => row |= 1 << k,
                    other => {
                        return Err(Error::Input(format!(
                            "row {} occasion {} holds {other}, expected 0 or 1",
                            i + 1,
                            k + 1
                        )))
                    }
                }
            }
            rows.push(row);
        }
        Self::new(units, rows, occasions, strata)
    }

    /// Builds a history from the occasion sets `s_1..s_K` (lists of unit labels).
    ///
    /// Units are indexed in order of first appearance.
    pub fn from_occasion_sets(sets: &[&[&str]], strata: Option<&[(&str, u32)]>) -> Result<Self> {
        let mut units: Vec<String> = Vec::new();
        let mut rows: Vec<u64> = Vec::new();
        for (k, set) in sets.iter().enumerate() {
            for &label in set.iter() {
                let i = match units.iter().position(|u| u == label) {
                    Some(i) => i,
                    None => {
                        units.push(label.to_string());
                        rows.push(0);
                        units.len() - 1
                    }
                };
                if rows[i] & (1 << k) != 0 {
                    return Err(Error::Input(format!(
                        "unit `{label}` listed twice on occasion {}",
                        k + 1
                    )));
                }
                rows[i] |= 1 << k;
            }
        }
        let strata = match strata {
            None => None,
            Some(map) => Some(
                units
                    .iter()
                    .map(|u| {
                        map.iter()
                            .find(|(l, _)| l == u)
                            .map(|&(_, g)| g)
                            .ok_or_else(|| Error::Input(format!("no stratum for unit `{u}`")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Self::new(units, rows, sets.len(), strata)
    }

    /// Same units and strata with different capture rows; used by the samplers, which
    /// construct rows that are valid by design.
    pub(crate) fn with_rows(&self, rows: Vec<u64>) -> Self {
        debug_assert_eq!(rows.len(), self.rows.len());
        debug_assert!(rows.iter().all(|&r| r != 0 && r & !occasion_mask(self.occasions) == 0));
        Self {
            units: Arc::clone(&self.units),
            strata: self.strata.clone(),
            rows,
            occasions: self.occasions,
        }
    }

    /// A history made of the given rows of `self` (repetition allowed), relabelled with
    /// `labels`. Used for resampling, where duplicated units must carry distinct labels.
    pub(crate) fn resampled(&self, picks: &[usize], labels: &Arc<[String]>) -> Self {
        debug_assert_eq!(picks.len(), labels.len());
        Self {
            units: Arc::clone(labels),
            strata: self
                .strata
                .as_ref()
                .map(|s| picks.iter().map(|&i| s[i]).collect::<Vec<_>>().into()),
            rows: picks.iter().map(|&i| self.rows[i]).collect(),
            occasions: self.occasions,
        }
    }

    /// The history with unit `skip` removed. Errors if that would leave no units.
    pub fn without_unit(&self, skip: usize) -> Result<Self> {
        if self.n_units() <= 1 {
            return Err(Error::Input("cannot remove the only unit".into()));
        }
        let keep = |i: &usize| *i != skip;
        let units: Vec<String> = (0..self.n_units())
            .filter(keep)
            .map(|i| self.units[i].clone())
            .collect();
        let rows = (0..self.n_units()).filter(keep).map(|i| self.rows[i]).collect();
        let strata = self
            .strata
            .as_ref()
            .map(|s| (0..self.n_units()).filter(keep).map(|i| s[i]).collect());
        Self::new(units, rows, self.occasions, strata)
    }

    /// A copy with every unit assigned stratum `1`.
    pub fn with_single_stratum(&self) -> Self {
        Self {
            strata: Some(vec![1u32; self.n_units()].into()),
            ..self.clone()
        }
    }

    /// A copy with the given 1-based strata attached.
    pub fn with_strata(&self, strata: Vec<u32>) -> Result<Self> {
        Self::new(self.units.to_vec(), self.rows.clone(), self.occasions, Some(strata))
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn occasions(&self) -> usize {
        self.occasions
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub(crate) fn shared_units(&self) -> &Arc<[String]> {
        &self.units
    }

    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn strata(&self) -> Option<&[u32]> {
        self.strata.as_deref()
    }

    pub(crate) fn shared_strata(&self) -> Option<&Arc<[u32]>> {
        self.strata.as_ref()
    }

    /// Whether unit `i` was captured on (zero-based) occasion `k`.
    pub fn captured(&self, i: usize, k: usize) -> bool {
        self.rows[i] >> k & 1 == 1
    }

    /// Number of captures of unit `i`.
    pub fn unit_captures(&self, i: usize) -> u32 {
        self.rows[i].count_ones()
    }

    /// Total number of 1-entries.
    pub fn total_captures(&self) -> u64 {
        self.rows.iter().map(|r| u64::from(r.count_ones())).sum()
    }

    /// Column sums `n_k`.
    pub fn occasion_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.occasions];
        for &row in &self.rows {
            let mut bits = row;
            while bits != 0 {
                sizes[bits.trailing_zeros() as usize] += 1;
                bits &= bits - 1;
            }
        }
        sizes
    }

    /// Row indices of units captured on occasion `k`, in unit order.
    pub fn occasion_members(&self, k: usize) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| self.captured(i, k)).collect()
    }

    /// Reads the CSV format described in the module docs.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3 {
            return Err(Error::Input(
                "header must be `unit,stratum,occ_1,...,occ_K` with at least one occasion".into(),
            ));
        }
        if &header[0] != "unit" || &header[1] != "stratum" {
            return Err(Error::Input(format!(
                "header must start with `unit,stratum`, got `{},{}`",
                &header[0], &header[1]
            )));
        }
        for (k, name) in header.iter().skip(2).enumerate() {
            let expected = format!("occ_{}", k + 1);
            if name != expected {
                return Err(Error::Input(format!(
                    "header column {} is `{name}`, expected `{expected}`",
                    k + 3
                )));
            }
        }
        let occasions = header.len() - 2;
        if occasions > MAX_OCCASIONS {
            return Err(Error::Input(format!(
                "{occasions} occasions exceed the supported maximum of {MAX_OCCASIONS}"
            )));
        }

        let mut units = Vec::new();
        let mut rows = Vec::new();
        let mut strata: Vec<Option<u32>> = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let lineno = line + 2;
            if record.len() != header.len() {
                return Err(Error::Input(format!(
                    "line {lineno}: {} fields, expected {}",
                    record.len(),
                    header.len()
                )));
            }
            let label = &record[0];
            if label.is_empty() {
                return Err(Error::Input(format!("line {lineno}: empty unit label")));
            }
            let stratum = match &record[1] {
                "" => None,
                s => Some(s.parse::<u32>().ok().filter(|&g| g >= 1).ok_or_else(|| {
                    Error::Input(format!(
                        "line {lineno}: stratum `{s}` is not a positive integer"
                    ))
                })?),
            };
            let mut row = 0u64;
            for (k, cell) in record.iter().skip(2).enumerate() {
                match cell {
                    "0" => {}
                    "1" => row |= 1 << k,
                    other => {
                        return Err(Error::Input(format!(
                            "line {lineno}: occ_{} holds `{other}`, expected 0 or 1",
                            k + 1
                        )))
                    }
                }
            }
            units.push(label.to_string());
            rows.push(row);
            strata.push(stratum);
        }
        if units.is_empty() {
            return Err(Error::Input("capture history has no units".into()));
        }
        let strata = if strata.iter().all(Option::is_none) {
            None
        } else if strata.iter().all(Option::is_some) {
            Some(strata.into_iter().map(Option::unwrap).collect())
        } else {
            return Err(Error::Input(
                "stratum column must be filled for every unit or for none".into(),
            ));
        };
        Self::new(units, rows, occasions, strata)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["unit".to_string(), "stratum".to_string()];
        header.extend((1..=self.occasions).map(|k| format!("occ_{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.n_units() {
            let mut record = Vec::with_capacity(self.occasions + 2);
            record.push(self.units[i].clone());
            record.push(self.strata.as_ref().map_or(String::new(), |s| s[i].to_string()));
            record.extend((0..self.occasions).map(|k| {
                if self.captured(i, k) { "1" } else { "0" }.to_string()
            }));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Input(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_m0() -> CaptureHistory {
        CaptureHistory::from_occasion_sets(&[&["A", "C"], &["A", "B", "C"], &["B"]], None).unwrap()
    }

    #[test]
    fn occasion_sets_assign_units_by_first_appearance() {
        let h = small_m0();
        assert_eq!(h.units(), ["A", "C", "B"]);
        assert_eq!(h.occasion_sizes(), vec![2, 3, 1]);
        assert_eq!(h.total_captures(), 6);
        assert!(h.captured(2, 2));
        assert!(!h.captured(1, 2));
    }

    #[test]
    fn csv_round_trip_with_strata() {
        let text = "unit,stratum,occ_1,occ_2,occ_3\nA,1,1,1,0\nB,1,0,1,1\nC,2,1,1,0\n";
        let h = CaptureHistory::from_csv_str(text).unwrap();
        assert_eq!(h.strata(), Some(&[1, 1, 2][..]));
        assert_eq!(h.to_csv_string().unwrap(), text);
    }

    #[test]
    fn csv_without_strata() {
        let text = "unit,stratum,occ_1,occ_2\nx,,1,0\ny,,1,1\n";
        let h = CaptureHistory::from_csv_str(text).unwrap();
        assert!(h.strata().is_none());
        assert_eq!(h.to_csv_string().unwrap(), text);
    }

    #[test]
    fn csv_rejects_non_binary_cells() {
        for bad in ["2", "yes", "1.0", ""] {
            let text = format!("unit,stratum,occ_1,occ_2\nA,,1,{bad}\n");
            assert!(CaptureHistory::from_csv_str(&text).is_err(), "accepted `{bad}`");
        }
    }

    #[test]
    fn csv_rejects_structural_problems() {
        let cases = [
            "id,stratum,occ_1\nA,,1\n",
            "unit,stratum,occ_2\nA,,1\n",
            "unit,stratum,occ_1\nA,,1\nA,,1\n",
            "unit,stratum,occ_1,occ_2\nA,,0,0\n",
            "unit,stratum,occ_1\nA,1,1\nB,,1\n",
            "unit,stratum,occ_1\nA,0,1\n",
            "unit,stratum,occ_1\n",
            "unit,stratum,occ_1\nA,,1,1\n",
        ];
        for text in cases {
            assert!(CaptureHistory::from_csv_str(text).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn without_unit_drops_row_and_stratum() {
        let h = small_m0().with_strata(vec![1, 2, 1]).unwrap();
        let d = h.without_unit(1).unwrap();
        assert_eq!(d.units(), ["A", "B"]);
        assert_eq!(d.strata(), Some(&[1, 1][..]));
        assert_eq!(d.total_captures(), 4);
    }
}
