//! Key-step semantics over per-timestep instruction text.
//!
//! The scripted policies emit the same statement text for every step of a
//! running sub-policy, so a key-step starts exactly where the raw text
//! changes. In-between steps carry the commented rendering of the most
//! recent key-step.

use thiserror::Error;

use super::ast::Instruction;
use super::parser::{parse, ParseError};

/// Default character budget of the early-stop prefix comparison.
pub const EARLY_STOP_PREFIX: usize = 20;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty trajectory")]
    Empty,
    #[error("step {step}: {err}")]
    Parse { step: usize, err: ParseError },
}

/// A per-timestep instruction sequence with key-step indices (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct CodeTrace {
    pub steps: Vec<Instruction>,
    pub keysteps: Vec<usize>,
}

impl CodeTrace {
    /// The live key-step instructions in order.
    pub fn keystep_instructions(&self) -> Vec<Instruction> {
        self.keysteps.iter().map(|&k| self.steps[k].clone()).collect()
    }

    /// Index of the key-step covering step `t`.
    pub fn keystep_covering(&self, t: usize) -> usize {
        match self.keysteps.binary_search(&t) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }
}

/// True iff at least one non-empty line does not start with '#'.
pub fn is_keystep(text: &str) -> bool {
    text.lines().any(|l| {
        let t = l.trim_start();
        !t.is_empty() && !t.starts_with('#')
    })
}

/// Turn raw per-step statement text from an oracle rollout into a trace:
/// the first step of every run of identical text becomes a live key-step,
/// repeats become the commented rendering of that key-step.
pub fn preprocess_trace(raw: &[String]) -> Result<CodeTrace, TraceError> {
    if raw.is_empty() {
        return Err(TraceError::Empty);
    }
    let mut steps = Vec::with_capacity(raw.len());
    let mut keysteps = Vec::new();
    let mut prev_text: Option<&str> = None;
    let mut current: Option<Instruction> = None;
    for (t, text) in raw.iter().enumerate() {
        if prev_text != Some(text.as_str()) {
            let instr =
                parse(text).map_err(|err| TraceError::Parse { step: t, err })?.live();
            keysteps.push(t);
            steps.push(instr.clone());
            current = Some(instr);
            prev_text = Some(text.as_str());
        } else {
            steps.push(current.as_ref().expect("run continues without a key-step").commented());
        }
    }
    Ok(CodeTrace { steps, keysteps })
}

/// True iff the first `l` characters of the generated text equal the first
/// `l` characters of the commented rendering of the last key-step. Both
/// sides include the "# " prefix, so the comparison runs on raw characters.
pub fn prefix_early_stop(generated_prefix: &str, last_keystep: &Instruction, l: usize) -> bool {
    let reference = last_keystep.commented().render();
    let a: Vec<char> = generated_prefix.chars().take(l).collect();
    let b: Vec<char> = reference.chars().take(l).collect();
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keystep_detection() {
        assert!(!is_keystep("# pick(get_actor('red cube'))"));
        assert!(is_keystep("# pose_dict['a'] = free_space(get_actor('red cube'))\npick(get_actor('red cube'))"));
        assert!(!is_keystep(""));
        assert!(!is_keystep("\n\n"));
        assert!(is_keystep("pick(get_actor('red cube'))"));
    }

    #[test]
    fn run_length_semantics() {
        let a = "pick(get_actor('red cube'))".to_string();
        let b = "done".to_string();
        let raw = vec![a.clone(), a.clone(), a.clone(), b.clone(), b.clone()];
        let trace = preprocess_trace(&raw).unwrap();
        assert_eq!(trace.keysteps, vec![0, 3]);
        assert!(!trace.steps[0].commented);
        assert!(trace.steps[1].commented);
        assert!(trace.steps[2].commented);
        assert_eq!(trace.steps[1].render(), "# pick(get_actor('red cube'))");
        assert_eq!(trace.steps[4].render(), "# done");
        assert_eq!(trace.keystep_covering(2), 0);
        assert_eq!(trace.keystep_covering(3), 1);
    }

    #[test]
    fn repeated_subtask_text_forms_new_keystep() {
        // The same statement text appearing in two separate runs yields two
        // key-steps (swapping picks the same object twice).
        let a = "pick(get_actor('red cube'))".to_string();
        let b = "place(get_actor('red cube'), target_pose=pose_dict['pose0'])".to_string();
        let raw = vec![a.clone(), b.clone(), a.clone()];
        let trace = preprocess_trace(&raw).unwrap();
        assert_eq!(trace.keysteps, vec![0, 1, 2]);
    }

    #[test]
    fn single_step_trace() {
        let raw = vec!["done".to_string()];
        let trace = preprocess_trace(&raw).unwrap();
        assert_eq!(trace.keysteps, vec![0]);
        assert!(!trace.steps[0].commented);
    }

    #[test]
    fn empty_trace_is_error() {
        assert!(matches!(preprocess_trace(&[]), Err(TraceError::Empty)));
    }

    #[test]
    fn early_stop_prefix_rules() {
        let k = parse("move3d(ee_target_pose=pre_pick_ee_pose(get_actor('red cube')))").unwrap();
        let full = k.commented().render();
        assert!(prefix_early_stop(&full, &k, EARLY_STOP_PREFIX));

        // Differs at character 21 but equal through 20: still fires
        // (documented false-positive of the heuristic).
        let mut altered: Vec<char> = full.chars().collect();
        altered[20] = 'X';
        let altered: String = altered.into_iter().collect();
        assert!(prefix_early_stop(&altered, &k, EARLY_STOP_PREFIX));

        // Differs at character 1: never fires.
        assert!(!prefix_early_stop(&full[1..], &k, EARLY_STOP_PREFIX));
    }
}
