//! External proposer, judge and evaluator processes.
//!
//! Each call spawns the configured command, writes one JSON request object
//! followed by a newline to its standard input, closes it, and reads one JSON
//! object from its standard output. A nonzero exit status is an error.
//!
//! Requests carry a `"kind"` field:
//!
//! - `propose`: `{"parents": [text], "prev_attempt": {"text", "errors": [string]} | null, "seed": u64}`,
//!   answered by `{"text", "modification", "operator"?}`
//! - `judge`: `{"candidate": text, "modification", "parents": [text]}`,
//!   answered by `{"coherence", "innovation", "complexity", "prompt_quality", "rationale"}`
//! - `evaluate`: `{"workflow": text}`, answered by `{"score": number}`

use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::evaluator::Evaluator;
use super::history::History;
use super::judge::{Judge, RubricScores};
use super::proposer::{PrevAttempt, Proposal, Proposer};
use super::EvolveError;
use crate::graph::WorkflowGraph;
use crate::mermaid::serialize_workflow;

/// A command run once per request.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessAdapter {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Whether concurrent calls are safe. Calls are serialized otherwise.
    #[serde(default)]
    pub reentrant: bool,
    #[serde(skip)]
    lock: Mutex<()>,
}

impl Clone for ProcessAdapter {
    fn clone(&self) -> Self {
        ProcessAdapter::new(self.program.clone(), self.args.clone(), self.reentrant)
    }
}

impl ProcessAdapter {
    pub fn new(program: impl Into<String>, args: Vec<String>, reentrant: bool) -> Self {
        ProcessAdapter { program: program.into(), args, reentrant, lock: Mutex::new(()) }
    }

    pub fn call(&self, request: &Value) -> Result<Value, EvolveError> {
        let _guard = if self.reentrant { None } else { Some(self.lock.lock().unwrap_or_else(|p| p.into_inner())) };
        let fail = |m: String| EvolveError::Adapter(format!("{}: {m}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("cannot start: {e}")))?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            let mut line = serde_json::to_vec(request).map_err(|e| EvolveError::Json(e.to_string()))?;
            line.push(b'\n');
            stdin.write_all(&line).map_err(|e| fail(format!("cannot write request: {e}")))?;
        }
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!("exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr).trim())));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let body = text.trim();
        if body.is_empty() {
            return Err(fail("empty response".into()));
        }
        serde_json::from_str(body).map_err(|e| EvolveError::Json(format!("{}: {e}", self.program)))
    }
}

fn decode<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T, EvolveError> {
    serde_json::from_value(v).map_err(|e| EvolveError::Json(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct AdapterProposer(pub ProcessAdapter);

impl Proposer for AdapterProposer {
    fn propose(&self, parents: &[&WorkflowGraph], prev: Option<&PrevAttempt>, rng: &mut ChaCha8Rng) -> Result<Proposal, EvolveError> {
        let prev = prev.map(|p| json!({"text": p.text, "errors": p.errors.iter().map(ToString::to_string).collect::<Vec<_>>()}));
        let req = json!({
            "kind": "propose",
            "parents": parents.iter().map(|g| serialize_workflow(g)).collect::<Vec<_>>(),
            "prev_attempt": prev,
            "seed": rng.gen::<u64>(),
        });
        decode(self.0.call(&req)?)
    }

    fn reentrant(&self) -> bool {
        self.0.reentrant
    }
}

#[derive(Debug, Clone)]
pub struct AdapterJudge(pub ProcessAdapter);

impl Judge for AdapterJudge {
    fn score(&self, candidate: &WorkflowGraph, modification: &str, parents: &[&WorkflowGraph], _history: &History) -> Result<RubricScores, EvolveError> {
        let req = json!({
            "kind": "judge",
            "candidate": serialize_workflow(candidate),
            "modification": modification,
            "parents": parents.iter().map(|g| serialize_workflow(g)).collect::<Vec<_>>(),
        });
        let s: RubricScores = decode(self.0.call(&req)?)?;
        s.check()?;
        Ok(s)
    }

    fn reentrant(&self) -> bool {
        self.0.reentrant
    }
}

#[derive(Debug, Clone)]
pub struct AdapterEvaluator(pub ProcessAdapter);

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

impl Evaluator for AdapterEvaluator {
    fn evaluate(&self, workflow: &WorkflowGraph) -> Result<f64, EvolveError> {
        let req = json!({"kind": "evaluate", "workflow": serialize_workflow(workflow)});
        let reply: ScoreReply = decode(self.0.call(&req)?)?;
        Ok(reply.score)
    }

    fn reentrant(&self) -> bool {
        self.0.reentrant
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::ops::testing::*;

    fn sh(script: &str) -> ProcessAdapter {
        ProcessAdapter::new("sh", vec!["-c".into(), script.into()], false)
    }

    #[test]
    fn evaluator_round_trip() {
        let e = AdapterEvaluator(sh("cat > /dev/null; echo '{\"score\": 0.25}'"));
        assert_eq!(e.evaluate(&gsm8k()).unwrap(), 0.25);
    }

    #[test]
    fn judge_scores_are_checked() {
        let ok = AdapterJudge(sh("cat > /dev/null; echo '{\"coherence\":5,\"innovation\":5,\"complexity\":5,\"prompt_quality\":5,\"rationale\":5}'"));
        assert_eq!(ok.score(&gsm8k(), "m", &[], &History::new()).unwrap().total(), 25);
        let bad = AdapterJudge(sh("cat > /dev/null; echo '{\"coherence\":0,\"innovation\":5,\"complexity\":5,\"prompt_quality\":5,\"rationale\":5}'"));
        assert!(bad.score(&gsm8k(), "m", &[], &History::new()).is_err());
    }

    #[test]
    fn proposer_echoes_the_parent() {
        let script = "python3 -c 'import json,sys; r=json.loads(sys.stdin.readline()); print(json.dumps({\"text\": r[\"parents\"][0], \"modification\": \"echo\"}))'";
        let p = AdapterProposer(sh(script));
        let g = gsm8k();
        use rand::SeedableRng;
        let out = p.propose(&[&g], None, &mut ChaCha8Rng::seed_from_u64(0));
        match out {
            Ok(out) => assert_eq!(out.text, serialize_workflow(&g)),
            // No interpreter available; the failure must still be typed.
            Err(e) => assert!(matches!(e, EvolveError::Adapter(_))),
        }
    }

    #[test]
    fn failures_are_typed() {
        assert!(matches!(AdapterEvaluator(sh("exit 3")).evaluate(&gsm8k()), Err(EvolveError::Adapter(_))));
        assert!(matches!(AdapterEvaluator(sh("cat > /dev/null; echo nope")).evaluate(&gsm8k()), Err(EvolveError::Json(_))));
        assert!(matches!(AdapterEvaluator(ProcessAdapter::new("/nonexistent/x", vec![], true)).evaluate(&gsm8k()), Err(EvolveError::Adapter(_))));
    }
}
