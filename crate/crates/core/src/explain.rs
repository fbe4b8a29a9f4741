//! Per-question breakdown of a score.

use serde::{Deserialize, Serialize};

use crate::scoring::{Direction, EvalMode, Score};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub direction: Direction,
    pub question: String,
    pub gold_answer: String,
    pub predicted_answer: String,
    pub unanswerable: bool,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub example_id: String,
    pub mode: EvalMode,
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearized_input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub rows: Vec<ReportRow>,
    /// Directions that produced no questions.
    pub degenerate: Vec<Direction>,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub signature: String,
}

/// What the score was computed against.
#[derive(Debug, Clone, Copy)]
pub struct ReportContext<'a> {
    pub example_id: &'a str,
    pub hypothesis: &'a str,
    pub linearized_input: Option<&'a str>,
    pub reference: Option<&'a str>,
}

/// Restructures a score into report rows without recomputing anything.
pub fn explain_example(score: &Score, ctx: ReportContext<'_>) -> ExampleReport {
    let directions = [&score.source_to_hyp, &score.hyp_to_source];
    let rows = directions
        .iter()
        .flat_map(|d| {
            d.per_question.iter().map(move |q| ReportRow {
                direction: d.direction,
                question: q.pair.question.clone(),
                gold_answer: q.pair.answer.clone(),
                predicted_answer: q.prediction.text.clone(),
                unanswerable: q.prediction.unanswerable,
                similarity: q.similarity,
            })
        })
        .collect();
    let (linearized_input, reference) = match score.mode {
        EvalMode::Data => (ctx.linearized_input.map(str::to_owned), None),
        EvalMode::Text => (None, ctx.reference.map(str::to_owned)),
    };
    ExampleReport {
        example_id: ctx.example_id.to_string(),
        mode: score.mode,
        hypothesis: ctx.hypothesis.to_string(),
        linearized_input,
        reference,
        rows,
        degenerate: directions.iter().filter(|d| d.degenerate).map(|d| d.direction).collect(),
        final_score: score.final_score,
        signature: score.signature.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    /// JSON mirroring every field at full precision.
    Structured,
    /// Fixed-layout text table, similarities to 4 decimals.
    Human,
}

impl std::str::FromStr for RenderFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" | "json" => Ok(RenderFormat::Structured),
            "human" | "text" => Ok(RenderFormat::Human),
            other => Err(format!("unknown report format `{other}` (expected structured or human)")),
        }
    }
}

const UNANSWERABLE: &str = "<unanswerable>";

fn clip(s: &str, width: usize) -> String {
    let count = s.chars().count();
    if count <= width {
        format!("{s:<width$}")
    } else {
        let mut out: String = s.chars().take(width - 1).collect();
        out.push('~');
        out
    }
}

pub fn render(report: &ExampleReport, format: RenderFormat) -> String {
    match format {
        RenderFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        RenderFormat::Human => render_human(report),
    }
}

fn render_human(report: &ExampleReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {}\n", report.signature));
    out.push_str(&format!("example:    {}\n", report.example_id));
    out.push_str(&format!("mode:       {}\n", report.mode));
    out.push_str(&format!("hypothesis: {}\n", report.hypothesis));
    if let Some(l) = &report.linearized_input {
        out.push_str(&format!("source:     {l}\n"));
    }
    if let Some(r) = &report.reference {
        out.push_str(&format!("reference:  {r}\n"));
    }
    out.push_str(&format!("final:      {:.4}\n", report.final_score));
    for d in &report.degenerate {
        out.push_str(&format!("degenerate: {d} (no questions generated)\n"));
    }
    out.push_str(&format!(
        "{} | {} | {} | {} | {}\n",
        clip("direction", 13),
        clip("question", 44),
        clip("gold", 24),
        clip("predicted", 24),
        "sim"
    ));
    out.push_str(&format!(
        "{}-+-{}-+-{}-+-{}-+-{}\n",
        "-".repeat(13),
        "-".repeat(44),
        "-".repeat(24),
        "-".repeat(24),
        "-".repeat(6)
    ));
    for row in &report.rows {
        let predicted = if row.unanswerable {
            UNANSWERABLE
        } else {
            row.predicted_answer.as_str()
        };
        out.push_str(&format!(
            "{} | {} | {} | {} | {:.4}\n",
            clip(&row.direction.to_string(), 13),
            clip(&row.question, 44),
            clip(&row.gold_answer, 24),
            clip(predicted, 24),
            row.similarity
        ));
    }
    out
}

/// Parses a structured rendering back into a report.
pub fn parse_structured(text: &str) -> Result<ExampleReport, serde_json::Error> {
    serde_json::from_str(text)
}
