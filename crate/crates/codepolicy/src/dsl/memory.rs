//! Key-step memory buffer and persistent-cache extraction.

use serde::{Deserialize, Serialize};

use super::ast::Instruction;
use super::trace::is_keystep;

/// Sentinel cache text when no assignment lines exist.
pub const NULL_CACHE: &str = "null";

/// Ordered, append-only history of live key-step instructions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryBuffer {
    entries: Vec<Instruction>,
}

impl MemoryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Instruction] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&Instruction> {
        self.entries.last()
    }

    /// Number of assignment lines stored so far; this also names the next
    /// generated pose key (`pose0`, `pose1`, ...).
    pub fn assignment_count(&self) -> usize {
        self.entries.iter().filter(|i| i.assign.is_some()).count()
    }

    /// Keys of stored assignments, in insertion order.
    pub fn assignment_keys(&self) -> Vec<String> {
        self.entries.iter().filter_map(|i| i.assign.as_ref().map(|a| a.key.clone())).collect()
    }

    /// Concatenated text of all entries, blocks separated by newlines.
    pub fn rendered(&self) -> String {
        self.entries.iter().map(Instruction::render).collect::<Vec<_>>().join("\n")
    }
}

/// Append the instruction iff its rendering is a key-step (not commented).
pub fn update_memory(m: &MemoryBuffer, predicted: &Instruction) -> MemoryBuffer {
    let mut out = m.clone();
    if is_keystep(&predicted.render()) {
        out.entries.push(predicted.clone());
    }
    out
}

/// Split text into cache lines (those containing a `pose_dict['…'] =`
/// assignment) and the rest, preserving order within each part.
pub fn extract_memory_info(text: &str) -> (String, String) {
    let mut cache = Vec::new();
    let mut rest = Vec::new();
    for line in text.lines() {
        if line_has_assignment(line) {
            cache.push(line);
        } else {
            rest.push(line);
        }
    }
    (cache.join("\n"), rest.join("\n"))
}

/// Substring search for the pattern `pose_dict['<anything-not-quote>'] =`,
/// the minimal-match reading of the assignment pattern.
fn line_has_assignment(line: &str) -> bool {
    let mut rest = line;
    while let Some(start) = rest.find("pose_dict['") {
        let after = &rest[start + "pose_dict['".len()..];
        if let Some(end) = after.find("'] =") {
            // a quote before the closing bracket would end the key early
            if !after[..end].contains('\'') {
                return true;
            }
        }
        rest = &rest[start + 1..];
    }
    false
}

/// The cache prompt fed to the low-level policy: all assignment lines of the
/// memory, or the literal text "null" when there are none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheInfo {
    pub cache_text: String,
}

impl CacheInfo {
    pub fn from_memory(m: &MemoryBuffer) -> Self {
        Self::from_text(&m.rendered())
    }

    pub fn from_text(text: &str) -> Self {
        let (cache, _) = extract_memory_info(text);
        if cache.is_empty() {
            Self { cache_text: NULL_CACHE.to_string() }
        } else {
            Self { cache_text: cache }
        }
    }

    pub fn null() -> Self {
        Self { cache_text: NULL_CACHE.to_string() }
    }

    pub fn is_null(&self) -> bool {
        self.cache_text == NULL_CACHE
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parser::parse;

    #[test]
    fn first_step_block_splits_into_cache_and_move() {
        let text = "pose_dict['pose0'] = free_space_next_to(get_actor('red cube'), \
                    get_actor('blue cylinder'), direction=[1, 0], description='right of')\n\
                    move3d(ee_target_pose=pre_pick_ee_pose(get_actor('red cube')))";
        let (cache, rest) = extract_memory_info(text);
        assert!(cache.starts_with("pose_dict['pose0'] = free_space_next_to"));
        assert_eq!(rest, "move3d(ee_target_pose=pre_pick_ee_pose(get_actor('red cube')))");
    }

    #[test]
    fn no_assignment_all_remaining() {
        let text = "pick(get_actor('red cube'))\ndone";
        let (cache, rest) = extract_memory_info(text);
        assert!(cache.is_empty());
        assert_eq!(rest, text);
    }

    #[test]
    fn partition_preserves_line_multiset() {
        let text = "a\npose_dict['k'] = Pose(0.15, 0.25)\nb\npose_dict['q'] = Pose(0.35, 0.45)";
        let (cache, rest) = extract_memory_info(text);
        let mut all: Vec<&str> = cache.lines().chain(rest.lines()).collect();
        let mut orig: Vec<&str> = text.lines().collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn update_memory_skips_commented() {
        let m = MemoryBuffer::new();
        let live = parse("pick(get_actor('red cube'))").unwrap();
        let commented = live.commented();
        let m = update_memory(&m, &commented);
        assert!(m.is_empty());
        let m = update_memory(&m, &live);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn cache_info_null_default_and_order() {
        let mut m = MemoryBuffer::new();
        assert!(CacheInfo::from_memory(&m).is_null());
        m = update_memory(
            &m,
            &parse("pose_dict['pose0'] = Pose(0.15, 0.25)\nmove3d(ee_target_pose=pre_pick_ee_pose(get_actor('red cube')))").unwrap(),
        );
        m = update_memory(&m, &parse("pick(get_actor('red cube'))").unwrap());
        m = update_memory(
            &m,
            &parse("pose_dict['pose1'] = Pose(0.55, 0.65)\nmove3d(ee_target_pose=pre_pick_ee_pose(get_actor('blue cube')))").unwrap(),
        );
        let cache = CacheInfo::from_memory(&m);
        assert_eq!(
            cache.cache_text,
            "pose_dict['pose0'] = Pose(0.15, 0.25)\npose_dict['pose1'] = Pose(0.55, 0.65)"
        );
        assert_eq!(m.assignment_count(), 2);
        assert_eq!(m.assignment_keys(), vec!["pose0", "pose1"]);
    }
}
