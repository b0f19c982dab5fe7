//! CSV emission for query and benchmark runs. The schema is versioned via
//! the leading comment line; `results` holds `root:score` pairs joined by
//! `;`.

use crate::graph::Query;
use crate::runtime::{Answer, Metrics};

pub const CSV_SCHEMA: &str = "# dkws-csv 1";
pub const CSV_HEADER: &str =
    "variant,query_id,num_keywords,tau,k,workers,elapsed_ms,supersteps,msg_count,msg_bytes,visited_nodes,results";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub variant: String,
    pub query_id: String,
    pub num_keywords: usize,
    pub tau: f64,
    pub k: usize,
    pub workers: usize,
    pub metrics: Metrics,
    pub results: String,
}

pub fn format_results(answers: &[Answer]) -> String {
    answers
        .iter()
        .map(|a| format!("{}:{}", a.root, a.score))
        .collect::<Vec<_>>()
        .join(";")
}

impl CsvRow {
    pub fn new(
        variant: &str,
        query_id: impl Into<String>,
        query: &Query,
        workers: usize,
        metrics: Metrics,
        answers: &[Answer],
    ) -> Self {
        CsvRow {
            variant: variant.to_string(),
            query_id: query_id.into(),
            num_keywords: query.keywords.len(),
            tau: query.tau,
            k: query.k,
            workers,
            metrics,
            results: format_results(answers),
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3},{},{},{},{},{}",
            self.variant,
            self.query_id,
            self.num_keywords,
            self.tau,
            self.k,
            self.workers,
            self.metrics.elapsed_ms,
            self.metrics.supersteps,
            self.metrics.msg_count,
            self.metrics.msg_bytes,
            self.metrics.visited_nodes,
            self.results
        )
    }

    /// The same line with elapsed time zeroed, for determinism comparisons.
    pub fn to_line_without_elapsed(&self) -> String {
        let mut fields: Vec<&str> = Vec::new();
        let line = self.to_line();
        for (i, f) in line.split(',').enumerate() {
            fields.push(if i == 6 { "-" } else { f });
        }
        fields.join(",")
    }
}

/// Strip the elapsed_ms column from a raw CSV line.
pub fn strip_elapsed(line: &str) -> String {
    line.split(',')
        .enumerate()
        .map(|(i, f)| if i == 6 { "-" } else { f })
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_layout() {
        let q = Query::new(vec![0, 1], 3.0, 10).unwrap();
        let answers = vec![
            Answer { root: 4, score: 2.0, slots: Vec::new() },
            Answer { root: 17, score: 3.0, slots: Vec::new() },
        ];
        let m = Metrics { elapsed_ms: 1.25, supersteps: 3, msg_count: 7, msg_bytes: 175, visited_nodes: 42, ..Default::default() };
        let row = CsvRow::new("np", "q0", &q, 4, m, &answers);
        assert_eq!(row.to_line(), "np,q0,2,3,10,4,1.250,3,7,175,42,4:2;17:3");
        assert_eq!(strip_elapsed(&row.to_line()), row.to_line_without_elapsed());
        assert_eq!(CSV_HEADER.split(',').count(), row.to_line().split(',').count());
    }
}
