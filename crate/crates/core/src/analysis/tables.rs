//! Plain table containers rendered to tab-separated and Markdown text.

use serde::{Deserialize, Serialize};

/// A rendered-string table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Table {
        Table { columns, rows: Vec::new() }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n", self.columns.join(" | "));
        out.push_str(&format!(
            "|{}\n",
            self.columns.iter().map(|_| " --- |").collect::<String>()
        ));
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        out
    }
}

/// One row of a delta table: comparison score minus baseline score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub key: String,
    pub baseline: f64,
    pub comparison: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<usize>,
}

/// A delta table with its baseline/comparison identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub baseline: String,
    pub comparison: String,
    pub rows: Vec<DeltaRow>,
}

impl DeltaTable {
    pub fn new(baseline: String, comparison: String) -> DeltaTable {
        DeltaTable { baseline, comparison, rows: Vec::new() }
    }

    pub fn push(&mut self, row: DeltaRow) {
        self.rows.push(row);
    }

    fn has_support(&self) -> bool {
        self.rows.iter().any(|r| r.support.is_some())
    }

    /// Flatten into a renderable [`Table`].
    pub fn to_table(&self) -> Table {
        let mut columns = vec![
            "key".to_string(),
            "baseline".to_string(),
            "comparison".to_string(),
            "delta".to_string(),
        ];
        let with_support = self.has_support();
        if with_support {
            columns.push("support".to_string());
        }
        let mut table = Table::new(columns);
        for row in &self.rows {
            let mut cells = vec![
                row.key.clone(),
                format!("{:.3}", row.baseline),
                format!("{:.3}", row.comparison),
                format!("{:+.3}", row.delta),
            ];
            if with_support {
                cells.push(row.support.map_or(String::new(), |s| s.to_string()));
            }
            table.push_row(cells);
        }
        table
    }

    pub fn to_tsv(&self) -> String {
        self.to_table().to_tsv()
    }

    pub fn to_markdown(&self) -> String {
        self.to_table().to_markdown()
    }
}
