//! Fixed token vocabulary over rendered code and task prompts.
//!
//! Greedy longest-match tokenization over a closed list: function names,
//! keyword arguments, color/shape/direction words, prompt words, digits,
//! grid-cell-center decimals, and punctuation. Unknown characters map to
//! `<unk>` (and are counted, so callers can log them).

use std::sync::atomic::{AtomicBool, Ordering};

pub type TokenId = usize;

pub const UNK: TokenId = 0;

/// Every token the renderers and prompt builders can produce. Order defines
/// token ids and is append-only (ids are baked into checkpoints).
const VOCAB: &[&str] = &[
    "<unk>",
    "\n",
    // functions and callables
    "free_space_next_to",
    "free_space",
    "get_actor",
    "get_pose",
    "pre_pick_ee_pose",
    "pre_place_ee_pose",
    "pre_push_pose",
    "pose_on_top",
    "towards_pose",
    "push_along_path",
    "place_on_actor",
    "move3d",
    "touch",
    "pick",
    "place",
    "pose_dict",
    "Pose",
    "done",
    // keyword arguments
    "actor_pos",
    "ee_target_pose",
    "target_actor",
    "target_pose",
    "direction",
    "description",
    "drop_distance",
    "match_ori_2d",
    "match_ori",
    "vacuum",
    "extend_bounds",
    "check_done",
    "topple",
    "push",
    "lift",
    "alpha",
    // literals
    "True",
    "False",
    "None",
    "null",
    // colors
    "cyan",
    "red",
    "white",
    "yellow",
    "black",
    "blue",
    "green",
    "purple",
    // shapes
    "cube",
    "cylinder",
    "triangle",
    "hexagon",
    // direction and prompt words
    "left",
    "right",
    "front",
    "behind",
    "of",
    "in",
    "up",
    "the",
    "to",
    "on",
    "top",
    "next",
    "target",
    "far",
    "stack",
    "and",
    "then",
    "swap",
    "reverse",
    "order",
    "pose0",
    "pose1",
    "pose2",
    "pose3",
    "pose4",
    "pose5",
    "pose6",
    "pose7",
    "init",
    // grid cell centers (two-decimal renderings)
    "0.05",
    "0.15",
    "0.25",
    "0.35",
    "0.45",
    "0.55",
    "0.65",
    "0.75",
    "0.85",
    "0.95",
    // digits and punctuation
    "0",
    "1",
    "2",
    "3",
    "4",
    "5",
    "6",
    "7",
    "8",
    "9",
    "(",
    ")",
    "[",
    "]",
    "'",
    ",",
    "=",
    "#",
    "_",
    ".",
    "-",
];

pub fn vocab_size() -> usize {
    VOCAB.len()
}

pub fn token_text(id: TokenId) -> &'static str {
    VOCAB[id]
}

/// Token ids sorted so longer strings match first.
fn match_order() -> &'static [usize] {
    use std::sync::OnceLock;
    static ORDER: OnceLock<Vec<usize>> = OnceLock::new();
    ORDER.get_or_init(|| {
        let mut idx: Vec<usize> = (1..VOCAB.len()).collect();
        idx.sort_by(|&a, &b| VOCAB[b].len().cmp(&VOCAB[a].len()).then(a.cmp(&b)));
        idx
    })
}

/// Tokenize text; returns ids and the number of characters that fell back
/// to `<unk>`.
pub fn tokenize_counting(text: &str) -> (Vec<TokenId>, usize) {
    let chars: Vec<char> = text.chars().collect();
    let mut ids = Vec::with_capacity(chars.len() / 3 + 1);
    let mut unknown = 0;
    let mut pos = 0;
    'outer: while pos < chars.len() {
        let c = chars[pos];
        if c == ' ' || c == '\t' {
            pos += 1;
            continue;
        }
        for &ti in match_order() {
            let tok = VOCAB[ti];
            let tlen = tok.chars().count();
            if pos + tlen <= chars.len()
                && chars[pos..pos + tlen].iter().collect::<String>() == tok
            {
                ids.push(ti);
                pos += tlen;
                continue 'outer;
            }
        }
        ids.push(UNK);
        unknown += 1;
        pos += 1;
    }
    (ids, unknown)
}

static OOV_SEEN: AtomicBool = AtomicBool::new(false);

/// Tokenize, logging the first out-of-vocabulary occurrence per process.
pub fn tokenize(text: &str) -> Vec<TokenId> {
    let (ids, unknown) = tokenize_counting(text);
    if unknown > 0 && !OOV_SEEN.swap(true, Ordering::Relaxed) {
        eprintln!("tokenizer: {unknown} out-of-vocabulary character(s) in {text:?}");
    }
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ast::*;
    use crate::sim::types::{Color, Direction, Shape};

    #[test]
    fn rendered_instructions_have_no_unknowns() {
        let samples = [
            Instruction::with_assign(
                Assign {
                    key: "pose0".into(),
                    rhs: AssignRhs::FreeSpaceNextTo {
                        actor: ActorRef::new(Color::Red, Shape::Cube),
                        next_to: ActorRef::new(Color::Blue, Shape::Cylinder),
                        direction: Direction::Front,
                    },
                },
                Command::Move3d {
                    target: EePoseExpr::PrePick { actor: ActorRef::new(Color::Red, Shape::Cube) },
                },
            ),
            Instruction::new(Command::PlaceOnActor {
                actor: ActorRef::with_pos(Color::Purple, Shape::Hexagon, (9, 0)),
                target_actor: ActorRef::new(Color::Cyan, Shape::Triangle),
                target: PoseExpr::OnTop(
                    ActorRef::with_pos(Color::Purple, Shape::Hexagon, (9, 0)),
                    ActorRef::new(Color::Cyan, Shape::Triangle),
                ),
            }),
            Instruction::with_assign(
                Assign { key: "pose3".into(), rhs: AssignRhs::Literal { x: 0.85, y: 0.35 } },
                Command::Move3d {
                    target: EePoseExpr::PrePushTo {
                        actor: ActorRef::new(Color::Black, Shape::Cube),
                        target: PoseExpr::Key("pose3".into()),
                    },
                },
            ),
        ];
        for s in &samples {
            for variant in [s.live(), s.commented()] {
                let (ids, unknown) = tokenize_counting(&variant.render());
                assert_eq!(unknown, 0, "OOV in {:?}", variant.render());
                assert!(!ids.is_empty());
            }
        }
    }

    #[test]
    fn cell_centers_are_single_tokens() {
        let (ids, unknown) = tokenize_counting("Pose(0.85, 0.35)");
        assert_eq!(unknown, 0);
        let toks: Vec<&str> = ids.iter().map(|&i| token_text(i)).collect();
        assert_eq!(toks, vec!["Pose", "(", "0.85", ",", "0.35", ")"]);
    }

    #[test]
    fn null_cache_is_one_token() {
        let (ids, unknown) = tokenize_counting("null");
        assert_eq!(unknown, 0);
        assert_eq!(ids.len(), 1);
        assert_eq!(token_text(ids[0]), "null");
    }

    #[test]
    fn unknown_characters_count() {
        let (_, unknown) = tokenize_counting("pick @@ done");
        assert_eq!(unknown, 2);
    }

    #[test]
    fn prompt_words_covered() {
        let prompts = [
            "pick up the red cube",
            "place the red cube to the left of the blue cylinder",
            "place the white hexagon on top of the green triangle",
            "push the yellow cube to the far target",
            "stack the red cube on the blue cylinder and the green triangle on the red cube in reverse order",
            "swap the red cube and the blue cylinder",
            "stack the red cube on the blue cylinder and then topple the stack",
        ];
        for p in prompts {
            let (_, unknown) = tokenize_counting(p);
            assert_eq!(unknown, 0, "OOV in {p:?}");
        }
    }
}
