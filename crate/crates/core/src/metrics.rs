//! Per-round, per-agent counters and the reports built from them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{Policy, UpdateOutcome, UpdateStatus};
use crate::model::{CspInstance, VarId};
use crate::simnet::{Outcome, Verdict};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRoundMetrics {
    pub agent: String,
    pub generated: u64,
    pub sent: u64,
    pub received: u64,
    pub added: u64,
    pub dropped_duplicate: u64,
    pub dropped_subsumed: u64,
    pub eliminated: u64,
    pub kb_size_after: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub agents: Vec<AgentRoundMetrics>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: Policy,
    /// Hex SHA-256 of the instance's canonical text form.
    pub instance: String,
    pub verdict: Option<Verdict>,
    pub truncated: bool,
    pub rounds: Vec<RoundMetrics>,
}

/// Something that happened at one agent during one round.
#[derive(Clone, Copy, Debug)]
pub enum MetricEvent<'a> {
    Generated { agent: VarId, raw_count: u64 },
    Sent { agent: VarId, count: usize },
    Received { agent: VarId, outcome: &'a UpdateOutcome },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("event for round {got} arrived after round {current} opened")]
    OutOfOrder { got: u64, current: u64 },
    #[error("unknown agent {0}")]
    UnknownAgent(VarId),
    #[error("reports describe different instances")]
    InstanceMismatch,
}

pub fn instance_digest(inst: &CspInstance) -> String {
    use sha2::{Digest, Sha256};
    let text = crate::io::serialize_csp_text(inst);
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl RunReport {
    /// Opens round 0 with each agent's initial knowledge-base size.
    pub fn new(policy: Policy, inst: &CspInstance, initial_kb: &[usize]) -> Self {
        let agents = inst
            .vars()
            .zip(initial_kb)
            .map(|(v, &kb)| AgentRoundMetrics {
                agent: inst.label(v),
                kb_size_after: kb as u64,
                ..Default::default()
            })
            .collect();
        RunReport {
            policy,
            instance: instance_digest(inst),
            verdict: None,
            truncated: false,
            rounds: vec![RoundMetrics { round: 0, agents }],
        }
    }

    pub fn current_round(&self) -> u64 {
        self.rounds.last().map_or(0, |r| r.round)
    }

    /// Opens rounds up to and including `round`, carrying KB sizes forward.
    fn open_until(&mut self, round: u64) {
        while self.current_round() < round {
            let last = self.rounds.last().expect("round 0 always exists");
            let agents = last
                .agents
                .iter()
                .map(|a| AgentRoundMetrics {
                    agent: a.agent.clone(),
                    kb_size_after: a.kb_size_after,
                    ..Default::default()
                })
                .collect();
            let next = last.round + 1;
            self.rounds.push(RoundMetrics { round: next, agents });
        }
    }

    pub fn record_event(&mut self, round: u64, event: MetricEvent<'_>) -> Result<(), MetricsError> {
        let current = self.current_round();
        if round < current {
            return Err(MetricsError::OutOfOrder { got: round, current });
        }
        self.open_until(round);
        let agent = match event {
            MetricEvent::Generated { agent, .. }
            | MetricEvent::Sent { agent, .. }
            | MetricEvent::Received { agent, .. } => agent,
        };
        let row = self
            .rounds
            .last_mut()
            .and_then(|r| r.agents.get_mut(agent.index()))
            .ok_or(MetricsError::UnknownAgent(agent))?;
        match event {
            MetricEvent::Generated { raw_count, .. } => row.generated += raw_count,
            MetricEvent::Sent { count, .. } => row.sent += count as u64,
            MetricEvent::Received { outcome, .. } => {
                row.received += 1;
                match outcome.status {
                    UpdateStatus::DroppedDuplicate => row.dropped_duplicate += 1,
                    UpdateStatus::DroppedSubsumed => row.dropped_subsumed += 1,
                    UpdateStatus::Added => {
                        let removed = outcome.eliminated.len() as u64;
                        row.added += 1;
                        row.eliminated += removed;
                        row.kb_size_after = row.kb_size_after + 1 - removed;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn finish(&mut self, verdict: Verdict, truncated: bool) {
        self.open_until(verdict.rounds.saturating_sub(1));
        self.verdict = Some(verdict);
        self.truncated = truncated;
    }

    /// All rows of one agent, in round order.
    pub fn agent_series(&self, agent: VarId) -> impl Iterator<Item = &AgentRoundMetrics> + '_ {
        self.rounds.iter().map(move |r| &r.agents[agent.index()])
    }

    pub fn total_generated(&self, agent: VarId) -> u64 {
        self.agent_series(agent).map(|a| a.generated).sum()
    }

    pub fn max_kb_size(&self, agent: VarId) -> u64 {
        self.agent_series(agent).map(|a| a.kb_size_after).max().unwrap_or(0)
    }

    pub fn agent_count(&self) -> usize {
        self.rounds.first().map_or(0, |r| r.agents.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: &str =
    "round,agent,generated,sent,received,added,dropped_duplicate,dropped_subsumed,eliminated,kb_size_after";

pub fn emit_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report is plain data");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            if let Some(v) = &report.verdict {
                let _ = writeln!(
                    out,
                    "# policy={} verdict={} rounds={} truncated={}",
                    report.policy, v.outcome, v.rounds, report.truncated
                );
            }
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in &report.rounds {
                for a in &r.agents {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{}",
                        r.round,
                        a.agent,
                        a.generated,
                        a.sent,
                        a.received,
                        a.added,
                        a.dropped_duplicate,
                        a.dropped_subsumed,
                        a.eliminated,
                        a.kb_size_after
                    );
                }
            }
            out
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub round: u64,
    pub agent: String,
    pub generated_a: u64,
    pub generated_b: u64,
    pub kb_size_a: u64,
    pub kb_size_b: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTotals {
    pub agent: String,
    pub generated_a: u64,
    pub generated_b: u64,
    pub max_kb_size_a: u64,
    pub max_kb_size_b: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub policy_a: Policy,
    pub policy_b: Policy,
    pub outcome_a: Option<Outcome>,
    pub outcome_b: Option<Outcome>,
    pub verdicts_agree: bool,
    pub rows: Vec<ComparisonRow>,
    pub totals: Vec<AgentTotals>,
}

/// Lines up two runs on the same instance round by round. A run that ended
/// earlier contributes zero generation and its final KB size to later rounds.
pub fn compare_reports(a: &RunReport, b: &RunReport) -> Result<Comparison, MetricsError> {
    if a.instance != b.instance || a.agent_count() != b.agent_count() {
        return Err(MetricsError::InstanceMismatch);
    }
    let n_rounds = a.rounds.len().max(b.rounds.len());
    let cell = |r: &RunReport, round: usize, agent: usize| -> (u64, u64) {
        match r.rounds.get(round) {
            Some(m) => (m.agents[agent].generated, m.agents[agent].kb_size_after),
            None => (0, r.rounds.last().map_or(0, |m| m.agents[agent].kb_size_after)),
        }
    };
    let mut rows = Vec::new();
    for round in 0..n_rounds {
        for agent in 0..a.agent_count() {
            let (ga, ka) = cell(a, round, agent);
            let (gb, kb) = cell(b, round, agent);
            rows.push(ComparisonRow {
                round: round as u64,
                agent: a.rounds[0].agents[agent].agent.clone(),
                generated_a: ga,
                generated_b: gb,
                kb_size_a: ka,
                kb_size_b: kb,
            });
        }
    }
    let totals = (0..a.agent_count() as u32)
        .map(VarId)
        .map(|v| AgentTotals {
            agent: a.rounds[0].agents[v.index()].agent.clone(),
            generated_a: a.total_generated(v),
            generated_b: b.total_generated(v),
            max_kb_size_a: a.max_kb_size(v),
            max_kb_size_b: b.max_kb_size(v),
        })
        .collect();
    let outcome_a = a.verdict.as_ref().map(|v| v.outcome);
    let outcome_b = b.verdict.as_ref().map(|v| v.outcome);
    Ok(Comparison {
        policy_a: a.policy,
        policy_b: b.policy,
        outcome_a,
        outcome_b,
        verdicts_agree: outcome_a == outcome_b,
        rows,
        totals,
    })
}

pub fn emit_comparison(c: &Comparison, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(c).expect("comparison is plain data");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let show = |o: Option<Outcome>| o.map_or_else(|| "none".to_string(), |o| o.to_string());
            let mut out = String::new();
            let _ = writeln!(
                out,
                "# a={} verdict={} | b={} verdict={} | agree={}",
                c.policy_a,
                show(c.outcome_a),
                c.policy_b,
                show(c.outcome_b),
                c.verdicts_agree
            );
            out.push_str("round,agent,generated_a,generated_b,kb_size_a,kb_size_b\n");
            for r in &c.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.round, r.agent, r.generated_a, r.generated_b, r.kb_size_a, r.kb_size_b
                );
            }
            out.push_str("# totals\nagent,generated_a,generated_b,max_kb_size_a,max_kb_size_b\n");
            for t in &c.totals {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    t.agent, t.generated_a, t.generated_b, t.max_kb_size_a, t.max_kb_size_b
                );
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complete_graph_coloring, ng};

    fn report() -> RunReport {
        RunReport::new(Policy::Ekbm, &complete_graph_coloring(3, 2), &[4, 4, 4])
    }

    #[test]
    fn added_with_eliminations_shrinks_kb() {
        let mut r = report();
        let outcome = UpdateOutcome {
            status: UpdateStatus::Added,
            eliminated: vec![ng(&[(0, 1), (1, 1)]); 4],
        };
        r.record_event(
            2,
            MetricEvent::Received {
                agent: VarId(0),
                outcome: &outcome,
            },
        )
        .unwrap();
        let row = &r.rounds[2].agents[0];
        assert_eq!(row.eliminated, 4);
        assert_eq!(row.kb_size_after, 1);
        // the intermediate round was opened with carried sizes
        assert_eq!(r.rounds[1].agents[0].kb_size_after, 4);
    }

    #[test]
    fn duplicate_leaves_kb_alone() {
        let mut r = report();
        let outcome = UpdateOutcome {
            status: UpdateStatus::DroppedDuplicate,
            eliminated: vec![],
        };
        r.record_event(
            0,
            MetricEvent::Received {
                agent: VarId(1),
                outcome: &outcome,
            },
        )
        .unwrap();
        let row = &r.rounds[0].agents[1];
        assert_eq!((row.received, row.dropped_duplicate, row.kb_size_after), (1, 1, 4));
    }

    #[test]
    fn generated_accumulates_and_order_is_enforced() {
        let mut r = report();
        r.record_event(
            1,
            MetricEvent::Generated {
                agent: VarId(0),
                raw_count: 21,
            },
        )
        .unwrap();
        assert_eq!(r.rounds[1].agents[0].generated, 21);
        assert_eq!(
            r.record_event(
                0,
                MetricEvent::Generated {
                    agent: VarId(0),
                    raw_count: 1
                }
            ),
            Err(MetricsError::OutOfOrder { got: 0, current: 1 })
        );
        assert_eq!(
            r.record_event(
                1,
                MetricEvent::Sent {
                    agent: VarId(9),
                    count: 1
                }
            ),
            Err(MetricsError::UnknownAgent(VarId(9)))
        );
    }

    #[test]
    fn csv_of_fresh_report_has_round_zero_only() {
        let csv = emit_report(&report(), ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,x1,0,0,0,0,0,0,0,4");
    }

    #[test]
    fn identical_reports_compare_equal() {
        let r = report();
        let c = compare_reports(&r, &r).unwrap();
        assert!(c.verdicts_agree);
        assert!(c
            .rows
            .iter()
            .all(|row| row.generated_a == row.generated_b && row.kb_size_a == row.kb_size_b));
    }

    #[test]
    fn mismatched_instances_are_rejected() {
        let other = RunReport::new(Policy::Ekbm, &complete_graph_coloring(3, 3), &[6, 6, 6]);
        assert_eq!(compare_reports(&report(), &other), Err(MetricsError::InstanceMismatch));
    }
}
