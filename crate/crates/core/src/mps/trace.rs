use serde::{Deserialize, Serialize};

/// Bond dimensions of the chain recorded after a gate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub gate: String,
    pub bonds: Vec<usize>,
}

/// One row per recorded gate.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankTrace {
    pub rows: Vec<TraceRow>,
}

impl RankTrace {
    pub fn push(&mut self, gate: impl Into<String>, bonds: Vec<usize>) {
        self.rows.push(TraceRow {
            gate: gate.into(),
            bonds,
        });
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest bond seen in any row.
    pub fn max_bond(&self) -> usize {
        self.rows
            .iter()
            .flat_map(|r| r.bonds.iter().copied())
            .max()
            .unwrap_or(1)
    }

    /// Row maxima, one per recorded gate.
    pub fn row_maxima(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| r.bonds.iter().copied().max().unwrap_or(1))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}
