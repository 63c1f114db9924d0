use serde::{Deserialize, Serialize};

/// `numerator / denominator` with an exactly rounded percentage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Ratio { num, den }
    }

    /// `round(100·num/den, 2)` in hundredths of a percent, half-up, in
    /// integer arithmetic. `None` when the denominator is zero.
    pub fn percent_hundredths(&self) -> Option<u64> {
        (self.den > 0).then(|| (20000 * self.num + self.den) / (2 * self.den))
    }

    pub fn percent(&self) -> Option<f64> {
        self.percent_hundredths().map(|h| h as f64 / 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub numerator: u64,
    pub denominator: u64,
    pub percent: f64,
}

impl MetricValue {
    fn of(r: Ratio) -> Option<Self> {
        r.percent().map(|percent| MetricValue { numerator: r.num, denominator: r.den, percent })
    }
}

/// One task's outcome as the metrics need it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    /// Task completed: the run ended successfully (and, in simulation,
    /// every rubric predicate holds).
    pub success: bool,
    /// Run ended unsuccessfully before completion (home exit, app close,
    /// unrecoverable failure).
    pub terminated: bool,
    pub rubrics_fulfilled: u64,
    pub rubrics_total: u64,
    pub actions_matched: u64,
    pub actions_reference: u64,
    pub failed_subtasks: u64,
    pub recovered_subtasks: u64,
}

/// Each metric is omitted when its denominator is zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ss: Option<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aa: Option<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tr: Option<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sr: Option<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rs: Option<MetricValue>,
}

impl MetricSet {
    pub fn from_ratios(ss: Ratio, aa: Ratio, tr: Ratio, sr: Ratio, rs: Ratio) -> Self {
        MetricSet {
            ss: MetricValue::of(ss),
            aa: MetricValue::of(aa),
            tr: MetricValue::of(tr),
            sr: MetricValue::of(sr),
            rs: MetricValue::of(rs),
        }
    }

    fn entries(&self) -> [(&'static str, Option<MetricValue>); 5] {
        [("SS", self.ss), ("AA", self.aa), ("TR", self.tr), ("SR", self.sr), ("RS", self.rs)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: String,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: Vec<TaskMetrics>,
    pub aggregate: MetricSet,
}

fn set_for<'a>(records: impl Iterator<Item = &'a TaskRecord> + Clone) -> MetricSet {
    let sum = |f: fn(&TaskRecord) -> u64| records.clone().map(f).sum::<u64>();
    let n = records.clone().count() as u64;
    MetricSet::from_ratios(
        Ratio::new(sum(|r| r.rubrics_fulfilled), sum(|r| r.rubrics_total)),
        Ratio::new(sum(|r| r.actions_matched), sum(|r| r.actions_reference)),
        Ratio::new(sum(|r| r.terminated as u64), n),
        Ratio::new(sum(|r| r.success as u64), n),
        Ratio::new(sum(|r| r.recovered_subtasks), sum(|r| r.failed_subtasks)),
    )
}

/// SS and AA are micro-averaged over rubric instances and reference
/// actions; TR and SR are over tasks; RS over failed subtasks.
pub fn compute_metrics(records: &[TaskRecord]) -> MetricsReport {
    MetricsReport {
        tasks: records
            .iter()
            .map(|r| TaskMetrics { task_id: r.task_id.clone(), metrics: set_for(std::iter::once(r)) })
            .collect(),
        aggregate: set_for(records.iter()),
    }
}

fn cell(v: Option<MetricValue>) -> String {
    match v {
        Some(m) => format!("{}/{} ({:.2})", m.numerator, m.denominator, m.percent),
        None => "-".into(),
    }
}

impl MetricsReport {
    /// Fixed-width table, one row per task plus the aggregate.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<28} {:>18} {:>18} {:>14} {:>14} {:>14}\n", "task", "SS", "AA", "TR", "SR", "RS");
        let row = |name: &str, m: &MetricSet| {
            let cells: Vec<String> = m.entries().iter().map(|(_, v)| cell(*v)).collect();
            format!(
                "{:<28} {:>18} {:>18} {:>14} {:>14} {:>14}\n",
                name, cells[0], cells[1], cells[2], cells[3], cells[4]
            )
        };
        for t in &self.tasks {
            out.push_str(&row(&t.task_id, &t.metrics));
        }
        out.push_str(&row("ALL", &self.aggregate));
        out
    }

    /// `scope,metric,numerator,denominator,percent`; omitted metrics are skipped.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,metric,numerator,denominator,percent\n");
        let scopes = self.tasks.iter().map(|t| (t.task_id.as_str(), &t.metrics)).chain([("ALL", &self.aggregate)]);
        for (scope, set) in scopes {
            for (name, v) in set.entries() {
                if let Some(m) = v {
                    out.push_str(&format!("{scope},{name},{},{},{:.2}\n", m.numerator, m.denominator, m.percent));
                }
            }
        }
        out
    }
}
