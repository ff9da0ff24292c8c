//! Micro-ODD mode state machine.
//!
//! Each step folds the evidence into the belief (rules in declaration order),
//! maps the most probable hypothesis to a target cell and falls back to the
//! designated defensive cell whenever the input cannot be placed: an unknown
//! evidence key, a value no rule declares, evidence that rules out every
//! hypothesis, or observed conditions outside every normal cell.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{worst_case_dmin, BeliefState, Bounds, MuOdd, OddError, Param, Posture};
use super::{belief_update, TransitionRule};
use crate::units::{self, Dimension, Magnitude};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// One clause of a lookahead rule: `context[key] <op> value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub key: String,
    pub op: Comparison,
    pub value: String,
}

fn parse_any_quantity(text: &str) -> Option<(Dimension, f64)> {
    [
        Dimension::Temperature,
        Dimension::Speed,
        Dimension::Acceleration,
        Dimension::Length,
        Dimension::Time,
        Dimension::Angle,
        Dimension::Dimensionless,
    ]
    .into_iter()
    .find_map(|d| match units::parse_magnitude(text, d) {
        Ok(Magnitude::Finite(v)) => Some((d, v)),
        _ => None,
    })
}

impl Condition {
    /// Quantities compare numerically when both sides share a dimension;
    /// otherwise only (in)equality of the trimmed text is defined.
    pub fn holds(&self, observed: &str) -> bool {
        let numeric = match (parse_any_quantity(observed), parse_any_quantity(&self.value)) {
            (Some((da, a)), Some((db, b))) if da == db => Some(a.partial_cmp(&b)),
            _ => None,
        };
        use std::cmp::Ordering::*;
        match (self.op, numeric) {
            (Comparison::Eq, Some(o)) => o == Some(Equal),
            (Comparison::Ne, Some(o)) => o != Some(Equal),
            (Comparison::Eq, None) => observed.trim() == self.value.trim(),
            (Comparison::Ne, None) => observed.trim() != self.value.trim(),
            (Comparison::Lt, Some(o)) => o == Some(Less),
            (Comparison::Le, Some(o)) => matches!(o, Some(Less | Equal)),
            (Comparison::Gt, Some(o)) => o == Some(Greater),
            (Comparison::Ge, Some(o)) => matches!(o, Some(Greater | Equal)),
            (_, None) => false,
        }
    }
}

/// Switch ahead of an anticipated change when every clause holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadRule {
    pub target: String,
    pub when: Vec<Condition>,
}

impl LookaheadRule {
    pub fn fires(&self, context: &BTreeMap<String, String>) -> bool {
        !self.when.is_empty()
            && self
                .when
                .iter()
                .all(|c| context.get(&c.key).is_some_and(|v| c.holds(v)))
    }
}

/// Validated, immutable machine configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddConfig {
    mu_odds: Vec<MuOdd>,
    hypotheses: Vec<String>,
    prior: BeliefState,
    rules: Vec<TransitionRule>,
    defensive_id: String,
    lookahead_rules: Vec<LookaheadRule>,
    initial_id: String,
}

/// A cell as declared, before its worst-case distance is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct MuOddSpec {
    pub id: String,
    pub bounds: Bounds,
    pub posture: Posture,
}

impl OddConfig {
    /// Validate the parts and precompute every normal cell's worst case.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cells: Vec<MuOddSpec>,
        hypotheses: Vec<String>,
        prior: BeliefState,
        rules: Vec<TransitionRule>,
        defensive_id: String,
        lookahead_rules: Vec<LookaheadRule>,
        initial_id: Option<String>,
        grid: usize,
    ) -> Result<Self, OddError> {
        let invalid = |m: String| Err(OddError::InvalidConfiguration(m));
        let mut ids = BTreeSet::new();
        let mut mu_odds = Vec::with_capacity(cells.len());
        for cell in cells {
            if !ids.insert(cell.id.clone()) {
                return invalid(format!("duplicate micro-ODD id `{}`", cell.id));
            }
            super::check_bounds(&cell.bounds)?;
            let d_min_worst = match cell.posture {
                Posture::Defensive { .. } => None,
                Posture::Normal => match worst_case_dmin(&cell.bounds, grid) {
                    Ok(w) => Some(w.d_min),
                    Err(e) => {
                        return invalid(format!("micro-ODD `{}`: {e}", cell.id));
                    }
                },
            };
            mu_odds.push(MuOdd {
                id: cell.id,
                bounds: cell.bounds,
                d_min_worst,
                posture: cell.posture,
            });
        }
        match mu_odds.iter().find(|o| o.id == defensive_id) {
            None => return invalid(format!("defensive_id `{defensive_id}` is not a micro-ODD")),
            Some(o) if !o.is_defensive() => {
                return invalid(format!("defensive_id `{defensive_id}` is not defensive"))
            }
            _ => {}
        }
        let hyp_set: BTreeSet<&str> = hypotheses.iter().map(String::as_str).collect();
        if hyp_set.is_empty() || hyp_set.len() != hypotheses.len() {
            return invalid("hypotheses must be non-empty and unique".into());
        }
        let prior_set: BTreeSet<&str> = prior.hypotheses().collect();
        if prior_set != hyp_set {
            return invalid("prior must give a weight for exactly the declared hypotheses".into());
        }
        for rule in &rules {
            if rule.likelihoods.is_empty() {
                return invalid(format!("rule `{}` declares no values", rule.evidence_key));
            }
            rule.check_covers(hyp_set.iter().copied())?;
            for h in &hyp_set {
                match rule.target_map.get(*h) {
                    None => {
                        return invalid(format!(
                            "rule `{}` has no target for hypothesis `{h}`",
                            rule.evidence_key
                        ))
                    }
                    Some(t) if !ids.contains(t) => {
                        return invalid(format!(
                            "rule `{}` targets unknown micro-ODD `{t}`",
                            rule.evidence_key
                        ))
                    }
                    _ => {}
                }
            }
            if let Some(extra) = rule.target_map.keys().find(|h| !hyp_set.contains(h.as_str())) {
                return invalid(format!(
                    "rule `{}` maps undeclared hypothesis `{extra}`",
                    rule.evidence_key
                ));
            }
            if rule.evidence_key.parse::<Param>().is_ok() {
                return invalid(format!(
                    "rule key `{}` collides with a condition parameter",
                    rule.evidence_key
                ));
            }
        }
        for la in &lookahead_rules {
            if !ids.contains(&la.target) {
                return invalid(format!("lookahead targets unknown micro-ODD `{}`", la.target));
            }
            if la.when.is_empty() {
                return invalid(format!("lookahead rule for `{}` has no conditions", la.target));
            }
        }
        let initial_id = match initial_id {
            Some(id) if ids.contains(&id) => id,
            Some(id) => return invalid(format!("initial_id `{id}` is not a micro-ODD")),
            None => mu_odds
                .iter()
                .find(|o| !o.is_defensive())
                .unwrap_or(&mu_odds[0])
                .id
                .clone(),
        };
        Ok(OddConfig {
            mu_odds,
            hypotheses,
            prior,
            rules,
            defensive_id,
            lookahead_rules,
            initial_id,
        })
    }

    pub fn mu_odds(&self) -> &[MuOdd] {
        &self.mu_odds
    }

    pub fn odd(&self, id: &str) -> Option<&MuOdd> {
        self.mu_odds.iter().find(|o| o.id == id)
    }

    pub fn hypotheses(&self) -> &[String] {
        &self.hypotheses
    }

    pub fn prior(&self) -> &BeliefState {
        &self.prior
    }

    pub fn rules(&self) -> &[TransitionRule] {
        &self.rules
    }

    pub fn defensive_id(&self) -> &str {
        &self.defensive_id
    }

    pub fn lookahead_rules(&self) -> &[LookaheadRule] {
        &self.lookahead_rules
    }

    pub fn initial_id(&self) -> &str {
        &self.initial_id
    }

    /// Every evidence key the machine understands.
    pub fn declared_keys(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .map(|r| r.evidence_key.as_str())
            .chain(self.lookahead_keys())
            .chain(Param::ALL.iter().map(|p| p.name()))
            .collect()
    }

    fn lookahead_keys(&self) -> impl Iterator<Item = &str> {
        self.lookahead_rules
            .iter()
            .flat_map(|r| r.when.iter().map(|c| c.key.as_str()))
    }

    fn is_lookahead_key(&self, key: &str) -> bool {
        self.lookahead_keys().any(|k| k == key)
    }

    fn is_rule_key(&self, key: &str) -> bool {
        self.rules.iter().any(|r| r.evidence_key == key)
    }

    /// The most conservative of `ids`: largest worst-case distance, defensive
    /// above everything, ties by id.
    fn most_conservative<'a>(&'a self, ids: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
        ids.into_iter()
            .filter_map(|id| self.odd(id))
            .max_by(|a, b| {
                a.conservativeness()
                    .total_cmp(&b.conservativeness())
                    .then_with(|| b.id.cmp(&a.id))
            })
            .map(|o| o.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub odd_id: String,
    pub belief: BeliefState,
    pub map_hypotheses: Vec<String>,
    /// Why the step fell back to the defensive cell, if it did.
    pub defensive_reason: Option<String>,
}

/// One state-machine step. Fails only when `current` is not a configured
/// cell; every other anomaly routes to the defensive cell.
pub fn step_state_machine(
    config: &OddConfig,
    current: &str,
    belief: &BeliefState,
    evidence: &BTreeMap<String, String>,
) -> Result<StepOutcome, OddError> {
    if config.odd(current).is_none() {
        return Err(OddError::UnknownOdd(current.to_string()));
    }
    let outcome = |id: &str, belief: BeliefState, reason: Option<String>| StepOutcome {
        odd_id: id.to_string(),
        map_hypotheses: belief.map_hypotheses().into_iter().map(String::from).collect(),
        belief,
        defensive_reason: reason,
    };
    if evidence.is_empty() {
        return Ok(outcome(current, belief.clone(), None));
    }
    let defensive = |belief: BeliefState, reason: String| {
        Ok(outcome(config.defensive_id(), belief, Some(reason)))
    };

    if let Some(k) = evidence
        .keys()
        .find(|k| !(config.is_rule_key(k) || config.is_lookahead_key(k) || k.parse::<Param>().is_ok()))
    {
        return defensive(belief.clone(), format!("undeclared evidence key `{k}`"));
    }

    let mut conditions = BTreeMap::new();
    for (k, v) in evidence {
        if let Ok(param) = k.parse::<Param>() {
            match param.parse_value(v) {
                Ok(x) => {
                    conditions.insert(param, x);
                }
                Err(e) => return defensive(belief.clone(), format!("bad condition {k}: {e}")),
            }
        }
    }

    let mut posterior = belief.clone();
    let mut applied: Vec<&TransitionRule> = Vec::new();
    for rule in config.rules() {
        let Some(value) = evidence.get(&rule.evidence_key) else {
            continue;
        };
        match belief_update(&posterior, rule, value) {
            Ok(b) => {
                posterior = b;
                applied.push(rule);
            }
            Err(e) => return defensive(posterior, e.to_string()),
        }
    }

    let mut target = current;
    if !applied.is_empty() {
        let candidates: Vec<&str> = posterior
            .map_hypotheses()
            .into_iter()
            .filter_map(|h| {
                applied
                    .iter()
                    .rev()
                    .find_map(|r| r.target_map.get(h).map(String::as_str))
            })
            .collect();
        match config.most_conservative(candidates) {
            Some(id) => target = id,
            None => return defensive(posterior, "no target for MAP hypothesis".into()),
        }
    }

    if !conditions.is_empty() {
        let odd = config.odd(target).expect("targets validated at load");
        if odd.is_defensive() || !odd.admits(&conditions) {
            let containing = config
                .mu_odds()
                .iter()
                .filter(|o| !o.is_defensive() && o.admits(&conditions))
                .map(|o| o.id.as_str());
            match config.most_conservative(containing) {
                Some(id) => target = id,
                None => {
                    return defensive(posterior, "conditions outside every micro-ODD".into())
                }
            }
        }
    }
    Ok(outcome(target, posterior, None))
}

/// Target of the first lookahead rule whose clauses all hold in `context`.
pub fn preemptive_transition_check<'a>(
    context: &BTreeMap<String, String>,
    config: &'a OddConfig,
) -> Option<&'a str> {
    config
        .lookahead_rules()
        .iter()
        .find(|r| r.fires(context))
        .map(|r| r.target.as_str())
}

/// One line of an evidence log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceRecord {
    pub t: f64,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRecord {
    pub t: f64,
    pub evidence: BTreeMap<String, String>,
    pub map_hypothesis: Vec<String>,
    pub posterior: BeliefState,
    pub active_odd: String,
    /// Following distance enforced by the active cell; absent when defensive.
    pub d_min_worst: Option<f64>,
    pub defensive_reason: Option<String>,
    pub preemptive: Option<String>,
}

/// Single-writer runtime around [`step_state_machine`]. Lookahead keys are
/// remembered across steps as the route context; a firing lookahead rule
/// overrides the evidence-driven state only while it keeps firing.
#[derive(Debug, Clone)]
pub struct OddMachine {
    config: Arc<OddConfig>,
    /// State chosen from evidence alone.
    base: String,
    current: String,
    belief: BeliefState,
    context: BTreeMap<String, String>,
}

impl OddMachine {
    pub fn new(config: Arc<OddConfig>) -> Self {
        OddMachine {
            base: config.initial_id().to_string(),
            current: config.initial_id().to_string(),
            belief: config.prior().clone(),
            context: BTreeMap::new(),
            config,
        }
    }

    pub fn config(&self) -> &OddConfig {
        &self.config
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    /// Consistent copy of the current state and belief.
    pub fn snapshot(&self) -> (String, BeliefState) {
        (self.current.clone(), self.belief.clone())
    }

    pub fn record(&self, t: f64, evidence: BTreeMap<String, String>) -> TransitionRecord {
        let odd = self.config.odd(&self.current);
        TransitionRecord {
            t,
            evidence,
            map_hypothesis: self
                .belief
                .map_hypotheses()
                .into_iter()
                .map(String::from)
                .collect(),
            posterior: self.belief.clone(),
            active_odd: self.current.clone(),
            d_min_worst: odd.and_then(|o| o.d_min_worst),
            defensive_reason: None,
            preemptive: None,
        }
    }

    /// Apply all evidence observed at time `t`.
    pub fn apply(&mut self, t: f64, evidence: BTreeMap<String, String>) -> TransitionRecord {
        for (k, v) in &evidence {
            if self.config.is_lookahead_key(k) {
                self.context.insert(k.clone(), v.clone());
            }
        }
        let outcome = step_state_machine(&self.config, &self.base, &self.belief, &evidence)
            .expect("current state is always a configured micro-ODD");
        self.base = outcome.odd_id.clone();
        let mut next = outcome.odd_id;
        let preemptive = preemptive_transition_check(&self.context, &self.config).map(String::from);
        if outcome.defensive_reason.is_none() {
            if let Some(p) = &preemptive {
                next = self
                    .config
                    .most_conservative([next.as_str(), p.as_str()])
                    .unwrap_or(&next)
                    .to_string();
            }
        }
        self.current = next;
        self.belief = outcome.belief;
        let mut rec = self.record(t, evidence);
        rec.defensive_reason = outcome.defensive_reason;
        rec.preemptive = preemptive;
        rec
    }

    /// Replay a log, one record per distinct timestamp in time order. An
    /// empty log yields a single record of the initial state.
    pub fn replay(&mut self, log: &[EvidenceRecord]) -> Vec<TransitionRecord> {
        if log.is_empty() {
            return vec![self.record(0.0, BTreeMap::new())];
        }
        let mut sorted: Vec<&EvidenceRecord> = log.iter().collect();
        sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut out = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].t;
            let mut evidence = BTreeMap::new();
            while i < sorted.len() && sorted[i].t == t {
                evidence.insert(sorted[i].key.clone(), sorted[i].value.clone());
                i += 1;
            }
            out.push(self.apply(t, evidence));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odd::parse_odd_config;

    fn fixture() -> OddConfig {
        parse_odd_config(include_str!("../../fixtures/figure5.toml")).unwrap()
    }

    fn evidence(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn ball_selects_very_low_speed() {
        let c = fixture();
        let out =
            step_state_machine(&c, "urban_day", c.prior(), &evidence(&[("ball_detected", "true")]))
                .unwrap();
        assert_eq!(out.odd_id, "very_low_speed");
        assert_eq!(out.map_hypotheses, vec!["child_risk_high"]);
    }

    #[test]
    fn empty_evidence_is_a_no_op() {
        let c = fixture();
        let out = step_state_machine(&c, "urban_children", c.prior(), &BTreeMap::new()).unwrap();
        assert_eq!(out.odd_id, "urban_children");
        assert_eq!(&out.belief, c.prior());
    }

    #[test]
    fn unknown_inputs_route_defensively() {
        let c = fixture();
        for ev in [
            evidence(&[("sensor_glitch", "???")]),
            evidence(&[("time_of_day", "dusk")]),
            evidence(&[("mu", "slippery")]),
            evidence(&[("mu", "0.4")]),
        ] {
            let out = step_state_machine(&c, "urban_day", c.prior(), &ev).unwrap();
            assert_eq!(out.odd_id, "defensive_stop", "{ev:?}");
            assert!(out.defensive_reason.is_some());
        }
    }

    #[test]
    fn observed_conditions_pick_a_containing_cell() {
        let c = fixture();
        let out =
            step_state_machine(&c, "urban_day", c.prior(), &evidence(&[("mu", "0.2")])).unwrap();
        assert_eq!(out.odd_id, "ice_capable");
        let out =
            step_state_machine(&c, "urban_day", c.prior(), &evidence(&[("mu", "0.8")])).unwrap();
        assert_eq!(out.odd_id, "urban_day");
    }

    #[test]
    fn unknown_current_state_is_an_error() {
        let c = fixture();
        assert!(step_state_machine(&c, "nowhere", c.prior(), &BTreeMap::new()).is_err());
    }

    #[test]
    fn freeze_lookahead() {
        let c = fixture();
        let ctx = |pairs: &[(&str, &str)]| evidence(pairs);
        assert_eq!(
            preemptive_transition_check(
                &ctx(&[("upcoming_feature", "bridge"), ("air_temperature", "1 degC")]),
                &c
            ),
            Some("ice_capable")
        );
        assert_eq!(
            preemptive_transition_check(
                &ctx(&[("upcoming_feature", "bridge"), ("air_temperature", "2 degC")]),
                &c
            ),
            Some("ice_capable")
        );
        assert_eq!(
            preemptive_transition_check(&ctx(&[("upcoming_feature", "none")]), &c),
            None
        );
        assert_eq!(
            preemptive_transition_check(
                &ctx(&[("upcoming_feature", "bridge"), ("air_temperature", "20 degC")]),
                &c
            ),
            None
        );
    }

    #[test]
    fn conditions_compare_quantities() {
        let le = Condition {
            key: "t".into(),
            op: Comparison::Le,
            value: "2 degC".into(),
        };
        assert!(le.holds("275 K"));
        assert!(!le.holds("cold"));
        let eq = Condition {
            key: "v".into(),
            op: Comparison::Eq,
            value: "36 km/h".into(),
        };
        assert!(eq.holds("10 m/s"));
    }

    #[test]
    fn replay_groups_by_timestamp() {
        let c = Arc::new(fixture());
        let log = [
            EvidenceRecord {
                t: 9.0,
                key: "ball_detected".into(),
                value: "true".into(),
            },
            EvidenceRecord {
                t: 0.0,
                key: "time_of_day".into(),
                value: "night".into(),
            },
            EvidenceRecord {
                t: 5.0,
                key: "children_nearby".into(),
                value: "true".into(),
            },
        ];
        let trace = OddMachine::new(c).replay(&log);
        let path: Vec<&str> = trace.iter().map(|r| r.active_odd.as_str()).collect();
        assert_eq!(path, ["urban_day", "urban_children", "very_low_speed"]);
        assert!(trace.iter().all(|r| r.d_min_worst.is_some()));
    }

    #[test]
    fn lookahead_context_persists_until_cleared() {
        let mut m = OddMachine::new(Arc::new(fixture()));
        m.apply(0.0, evidence(&[("upcoming_feature", "bridge")]));
        assert_eq!(m.current(), "urban_day");
        let r = m.apply(1.0, evidence(&[("air_temperature", "1 degC")]));
        assert_eq!(r.active_odd, "ice_capable");
        assert_eq!(r.preemptive.as_deref(), Some("ice_capable"));
        m.apply(2.0, evidence(&[("time_of_day", "night")]));
        assert_eq!(m.current(), "ice_capable");
        m.apply(3.0, evidence(&[("upcoming_feature", "none"), ("time_of_day", "night")]));
        assert_eq!(m.current(), "urban_day");
    }
}
