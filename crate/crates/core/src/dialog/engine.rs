use std::collections::BTreeMap;

use super::{
    Answer, Clock, DialogError, DialogMode, DialogSession, Outcome, PendingConfirmation, Prompt,
    PromptKind, Recorded, Role, SessionStatus, Step, Turn, TurnPayload,
};
use crate::dataset::AttributeValue;
use crate::induction::{DecisionTree, NodeId, Routing};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DialogConfig<T> {
    /// Answers below this confidence are read back for confirmation.
    pub confirm_threshold: T,
    /// Greedy sessions treat answers at or above this confidence as certain and
    /// the rest as unknown.
    pub greedy_certainty: T,
}

impl<T: Scalar> Default for DialogConfig<T> {
    fn default() -> Self {
        let half = T::from_f64_lossy(0.5);
        Self {
            confirm_threshold: half,
            greedy_certainty: half,
        }
    }
}

/// Runs sessions against one tree version.
pub struct DialogEngine<'a, T> {
    tree: &'a DecisionTree,
    config: DialogConfig<T>,
    clock: &'a dyn Clock,
}

impl<'a, T: Scalar> DialogEngine<'a, T> {
    pub fn new(tree: &'a DecisionTree, config: DialogConfig<T>, clock: &'a dyn Clock) -> Self {
        Self {
            tree,
            config,
            clock,
        }
    }

    pub fn tree(&self) -> &DecisionTree {
        self.tree
    }

    fn push_turn(
        &self,
        s: &mut DialogSession<T>,
        role: Role,
        attribute: Option<String>,
        payload: TurnPayload<T>,
    ) {
        let index = s.transcript.len();
        s.transcript.push(Turn {
            index,
            role,
            attribute,
            payload,
            at_ms: self.clock.now_ms(),
        });
    }

    fn check_version(&self, s: &DialogSession<T>) -> Result<(), DialogError> {
        if s.tree_version != self.tree.version() {
            return Err(DialogError::VersionMismatch {
                session: s.tree_version,
                engine: self.tree.version(),
            });
        }
        Ok(())
    }

    fn validate_extras(
        &self,
        extras: &BTreeMap<String, AttributeValue>,
    ) -> Result<(), DialogError> {
        for (name, value) in extras {
            let (_, a) = self.tree.schema().lookup(name)?;
            if value.is_missing() {
                return Err(DialogError::MissingVolunteered(name.clone()));
            }
            a.validate(value)?;
        }
        Ok(())
    }

    /// Opens a session at the root and asks the first question (or classifies
    /// immediately when the root is a leaf).
    pub fn start_session(&self, id: impl Into<String>, mode: DialogMode) -> DialogSession<T> {
        self.start_with(id, mode, BTreeMap::new())
            .expect("no volunteered values to validate")
    }

    /// Like [`start_session`](Self::start_session), with values the user offered
    /// before being asked anything.
    pub fn start_with(
        &self,
        id: impl Into<String>,
        mode: DialogMode,
        volunteered: BTreeMap<String, AttributeValue>,
    ) -> Result<DialogSession<T>, DialogError> {
        self.validate_extras(&volunteered)?;
        let mut s = DialogSession {
            id: id.into(),
            tree_version: self.tree.version(),
            mode,
            frontier: vec![(0, T::one())],
            volunteered: BTreeMap::new(),
            transcript: Vec::new(),
            status: SessionStatus::Active,
            result: None,
            novel: false,
            pending: None,
            answers: BTreeMap::new(),
            confirmation: None,
        };
        if !volunteered.is_empty() {
            s.volunteered = volunteered.clone();
            self.push_turn(
                &mut s,
                Role::User,
                None,
                TurnPayload::Volunteered {
                    values: volunteered,
                },
            );
        }
        self.next_question(&mut s)?;
        Ok(s)
    }

    fn recorded(&self, s: &DialogSession<T>, attribute: &str) -> Option<Recorded<T>> {
        if let Some(r) = s.answers.get(attribute) {
            return Some(r.clone());
        }
        s.volunteered.get(attribute).map(|v| Recorded::Known {
            value: v.clone(),
            confidence: T::one(),
        })
    }

    /// Mass moving from `node` given what is known about its attribute.
    fn expand(
        &self,
        mode: DialogMode,
        node: NodeId,
        mass: T,
        info: &Recorded<T>,
        novel: &mut bool,
    ) -> Vec<(NodeId, T)> {
        let n = self.tree.node(node);
        let edges = n.edges();
        let spread_unknown = |novel: &mut bool| -> Vec<(NodeId, T)> {
            match self.tree.route(node, &AttributeValue::Missing) {
                Routing::Matched(e) => vec![(edges[e].child, mass)],
                Routing::Unseen(e) => {
                    *novel = true;
                    vec![(edges[e].child, mass)]
                }
                Routing::Unknown => match mode {
                    DialogMode::Greedy => {
                        let e = n.max_probability_edge().expect("internal node has edges");
                        vec![(edges[e].child, mass)]
                    }
                    DialogMode::Belief => edges
                        .iter()
                        .enumerate()
                        .map(|(i, e)| (e.child, mass * n.edge_probability::<T>(i)))
                        .collect(),
                },
            }
        };
        match info {
            Recorded::Unknown => spread_unknown(novel),
            Recorded::Known { value, confidence } => {
                let target = match self.tree.route(node, value) {
                    Routing::Matched(e) => e,
                    Routing::Unseen(e) => {
                        *novel = true;
                        e
                    }
                    Routing::Unknown => return spread_unknown(novel),
                };
                let c = *confidence;
                match mode {
                    DialogMode::Greedy if c >= self.config.greedy_certainty => {
                        vec![(edges[target].child, mass)]
                    }
                    DialogMode::Greedy => spread_unknown(novel),
                    DialogMode::Belief => {
                        if c >= T::one() || edges.len() == 1 {
                            return vec![(edges[target].child, mass)];
                        }
                        let rest: u64 = edges
                            .iter()
                            .enumerate()
                            .filter(|&(i, _)| i != target)
                            .map(|(_, e)| e.support)
                            .sum();
                        let rest = T::from_count(rest);
                        let mut out = vec![(edges[target].child, mass * c)];
                        for (i, e) in edges.iter().enumerate() {
                            if i != target {
                                let share = T::from_count(e.support) / rest;
                                out.push((e.child, mass * (T::one() - c) * share));
                            }
                        }
                        out
                    }
                }
            }
        }
    }

    /// Pushes frontier mass through every node whose attribute already has an
    /// answer (explicit, unknown, or volunteered).
    fn advance(&self, s: &mut DialogSession<T>) {
        loop {
            let mut changed = false;
            let mut next: Vec<(NodeId, T)> = Vec::with_capacity(s.frontier.len());
            let mut novel = s.novel;
            for &(id, mass) in &s.frontier {
                let node = self.tree.node(id);
                let info = node.attribute().and_then(|a| self.recorded(s, a));
                match info {
                    Some(info) => {
                        changed = true;
                        next.extend(self.expand(s.mode, id, mass, &info, &mut novel));
                    }
                    None => next.push((id, mass)),
                }
            }
            s.novel = novel;
            s.frontier = normalize(merge(next));
            if !changed {
                break;
            }
        }
    }

    fn finish(&self, s: &mut DialogSession<T>, leaves: Vec<(NodeId, T)>) -> Outcome<T> {
        let c = crate::induction::classify::aggregate(self.tree, leaves, false);
        let outcome = Outcome {
            class: c.class,
            probability: c.probability,
            distribution: c.distribution,
        };
        s.status = SessionStatus::Classified;
        s.pending = None;
        s.result = Some(outcome.clone());
        self.push_turn(
            s,
            Role::System,
            None,
            TurnPayload::Decision {
                class: outcome.class.clone(),
                probability: outcome.probability,
            },
        );
        outcome
    }

    /// The next question to put to the user, or the classification once all
    /// frontier mass sits on leaves. A pending question is returned unchanged.
    pub fn next_question(&self, s: &mut DialogSession<T>) -> Result<Step<T>, DialogError> {
        self.check_version(s)?;
        if s.is_classified() {
            return Err(DialogError::SessionClosed);
        }
        if let Some(p) = &s.pending {
            return Ok(Step::Question(p.clone()));
        }
        self.advance(s);

        let candidate = s
            .frontier
            .iter()
            .filter_map(|&(id, mass)| self.tree.node(id).attribute().map(|a| (id, mass, a)))
            .min_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.2.cmp(b.2))
                    .then_with(|| a.0.cmp(&b.0))
            });
        match candidate {
            None => {
                let leaves = s.frontier.clone();
                Ok(Step::Classified(self.finish(s, leaves)))
            }
            Some((_, _, attribute)) => {
                let (_, schema) = self
                    .tree
                    .schema()
                    .lookup(attribute)
                    .expect("tree attributes are in its schema");
                let prompt = Prompt {
                    kind: PromptKind::Ask,
                    attribute: attribute.to_string(),
                    text: schema.question.clone(),
                };
                self.push_turn(
                    s,
                    Role::System,
                    Some(prompt.attribute.clone()),
                    TurnPayload::Question {
                        text: prompt.text.clone(),
                    },
                );
                s.pending = Some(prompt.clone());
                Ok(Step::Question(prompt))
            }
        }
    }

    /// Records the user's reply to the pending question. Known answers below the
    /// confirmation threshold are held until [`submit_confirmation`](Self::submit_confirmation).
    pub fn submit_answer(
        &self,
        s: &mut DialogSession<T>,
        attribute: &str,
        answer: Answer<T>,
        extras: BTreeMap<String, AttributeValue>,
    ) -> Result<(), DialogError> {
        self.check_version(s)?;
        if s.is_classified() {
            return Err(DialogError::SessionClosed);
        }
        let pending = s.pending.clone().ok_or(DialogError::NoPendingQuestion)?;
        if pending.kind == PromptKind::Confirm {
            return Err(DialogError::AwaitingConfirmation);
        }
        if pending.attribute != attribute {
            return Err(DialogError::AttributeMismatch {
                expected: pending.attribute,
                got: attribute.to_string(),
            });
        }
        let (_, schema) = self.tree.schema().lookup(attribute)?;
        if let Answer::Known { value, confidence } = &answer {
            if !(*confidence > T::zero() && *confidence <= T::one()) {
                return Err(DialogError::InvalidConfidence(confidence.as_f64()));
            }
            schema.validate(value)?;
        }
        self.validate_extras(&extras)?;

        for (k, v) in &extras {
            s.volunteered.insert(k.clone(), v.clone());
        }
        s.pending = None;
        match answer {
            Answer::Unknown => {
                self.push_turn(
                    s,
                    Role::User,
                    Some(attribute.to_string()),
                    TurnPayload::Unknown { volunteered: extras },
                );
                s.answers.insert(attribute.to_string(), Recorded::Unknown);
            }
            Answer::Known { value, confidence } if value.is_missing() => {
                let _ = confidence;
                self.push_turn(
                    s,
                    Role::User,
                    Some(attribute.to_string()),
                    TurnPayload::Unknown { volunteered: extras },
                );
                s.answers.insert(attribute.to_string(), Recorded::Unknown);
            }
            Answer::Known { value, confidence } => {
                self.push_turn(
                    s,
                    Role::User,
                    Some(attribute.to_string()),
                    TurnPayload::Answer {
                        value: value.clone(),
                        confidence,
                        volunteered: extras,
                    },
                );
                if confidence < self.config.confirm_threshold {
                    let text = format!("I understood {value} for {}. Is that right?", attribute);
                    self.push_turn(
                        s,
                        Role::System,
                        Some(attribute.to_string()),
                        TurnPayload::Confirm {
                            text: text.clone(),
                            value: value.clone(),
                        },
                    );
                    s.pending = Some(Prompt {
                        kind: PromptKind::Confirm,
                        attribute: attribute.to_string(),
                        text,
                    });
                    s.confirmation = Some(PendingConfirmation {
                        attribute: attribute.to_string(),
                        value,
                        confidence,
                    });
                } else {
                    s.answers
                        .insert(attribute.to_string(), Recorded::Known { value, confidence });
                }
            }
        }
        Ok(())
    }

    /// Resolves a read-back: accepted answers become certain, rejected ones unknown.
    pub fn submit_confirmation(
        &self,
        s: &mut DialogSession<T>,
        accepted: bool,
    ) -> Result<(), DialogError> {
        self.check_version(s)?;
        if s.is_classified() {
            return Err(DialogError::SessionClosed);
        }
        let c = s
            .confirmation
            .take()
            .ok_or(DialogError::NoPendingConfirmation)?;
        s.pending = None;
        self.push_turn(
            s,
            Role::User,
            Some(c.attribute.clone()),
            TurnPayload::Confirmation { accepted },
        );
        let rec = if accepted {
            Recorded::Known {
                value: c.value,
                confidence: T::one(),
            }
        } else {
            Recorded::Unknown
        };
        s.answers.insert(c.attribute, rec);
        Ok(())
    }

    /// Classifies now. Mass still on internal nodes descends along
    /// max-probability edges to leaves before the class distribution is taken.
    pub fn classify_session(&self, s: &mut DialogSession<T>) -> Result<Outcome<T>, DialogError> {
        self.check_version(s)?;
        if let Some(r) = &s.result {
            return Ok(r.clone());
        }
        self.advance(s);
        let mut leaves = Vec::with_capacity(s.frontier.len());
        for &(id, mass) in &s.frontier {
            let mut node = id;
            while let Some(e) = self.tree.node(node).max_probability_edge() {
                node = self.tree.node(node).edges()[e].child;
            }
            leaves.push((node, mass));
        }
        let leaves = merge(leaves);
        s.frontier = leaves.clone();
        Ok(self.finish(s, leaves))
    }

    /// Rebuilds a session from the user turns of a recorded transcript.
    pub fn replay(
        &self,
        id: impl Into<String>,
        mode: DialogMode,
        turns: &[Turn<T>],
    ) -> Result<DialogSession<T>, DialogError> {
        let mut user = turns.iter().filter(|t| t.role == Role::User).peekable();
        let opening = match user.peek() {
            Some(Turn {
                payload: TurnPayload::Volunteered { values },
                ..
            }) => {
                let v = values.clone();
                user.next();
                v
            }
            _ => BTreeMap::new(),
        };
        let mut s = self.start_with(id, mode, opening)?;
        for t in user {
            if s.is_classified() {
                return Err(DialogError::BadReplay(t.index));
            }
            let attribute = t.attribute.clone().ok_or(DialogError::BadReplay(t.index))?;
            match &t.payload {
                TurnPayload::Answer {
                    value,
                    confidence,
                    volunteered,
                } => self.submit_answer(
                    &mut s,
                    &attribute,
                    Answer::Known {
                        value: value.clone(),
                        confidence: *confidence,
                    },
                    volunteered.clone(),
                )?,
                TurnPayload::Unknown { volunteered } => {
                    self.submit_answer(&mut s, &attribute, Answer::Unknown, volunteered.clone())?
                }
                TurnPayload::Confirmation { accepted } => {
                    self.submit_confirmation(&mut s, *accepted)?
                }
                _ => return Err(DialogError::BadReplay(t.index)),
            }
            if s.pending.is_none() {
                self.next_question(&mut s)?;
            }
        }
        Ok(s)
    }
}

fn merge<T: Scalar>(mut v: Vec<(NodeId, T)>) -> Vec<(NodeId, T)> {
    v.sort_by_key(|&(id, _)| id);
    let mut out: Vec<(NodeId, T)> = Vec::with_capacity(v.len());
    for (id, m) in v {
        match out.last_mut() {
            Some(last) if last.0 == id => last.1 = last.1 + m,
            _ => out.push((id, m)),
        }
    }
    out
}

fn normalize<T: Scalar>(mut v: Vec<(NodeId, T)>) -> Vec<(NodeId, T)> {
    v.retain(|&(_, m)| m > T::zero());
    let total: T = v.iter().map(|&(_, m)| m).sum();
    if total > T::zero() {
        for e in &mut v {
            e.1 = e.1 / total;
        }
    }
    v
}
