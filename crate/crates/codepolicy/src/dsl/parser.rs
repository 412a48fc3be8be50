//! Recursive-descent parser for statement blocks.
//!
//! Accepts flexible whitespace and optional keyword arguments (recorded in
//! the AST so canonical rendering preserves them); everything else about the
//! grammar is closed. Errors carry 1-based line/column positions.

use thiserror::Error;

use super::ast::{ActorRef, Assign, AssignRhs, Command, EePoseExpr, Instruction, PoseExpr};
use crate::sim::types::{Color, Direction, Shape};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line_no: usize,
    src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a str, line_no: usize) -> Self {
        Self { chars: line.chars().collect(), pos: 0, line_no, src: line }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { line: self.line_no, col: self.pos + 1, msg: msg.into() })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ') | Some('\t')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            match self.peek() {
                Some(got) => self.err(format!("expected '{c}', found '{got}'")),
                None => self.err(format!("expected '{c}', found end of line")),
            }
        }
    }

    fn try_eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Consume `word` if the upcoming identifier equals it.
    fn try_word(&mut self, word: &str) -> bool {
        self.skip_ws();
        let rest: String = self.chars[self.pos..].iter().collect();
        if rest.starts_with(word) {
            let after = rest[word.len()..].chars().next();
            let boundary = !matches!(after, Some(c) if c.is_alphanumeric() || c == '_');
            if boundary {
                self.pos += word.len();
                return true;
            }
        }
        false
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected identifier");
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn string_lit(&mut self) -> Result<String, ParseError> {
        self.eat('\'')?;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == '\'' {
                let s: String = self.chars[start..self.pos].iter().collect();
                self.pos += 1;
                return Ok(s);
            }
            self.pos += 1;
        }
        self.err("unterminated string literal")
    }

    fn number(&mut self) -> Result<f32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some('-') | Some('+')) {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected number");
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<f32>().map_err(|_| ParseError {
            line: self.line_no,
            col: start + 1,
            msg: format!("invalid number '{s}'"),
        })
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some('-') | Some('+')) {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected integer");
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<i64>().map_err(|_| ParseError {
            line: self.line_no,
            col: start + 1,
            msg: format!("invalid integer '{s}'"),
        })
    }

    fn bool_lit(&mut self) -> Result<bool, ParseError> {
        if self.try_word("True") {
            Ok(true)
        } else if self.try_word("False") {
            Ok(false)
        } else {
            self.err("expected True or False")
        }
    }

    fn end(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Ok(()),
            Some(c) => self.err(format!("unexpected trailing '{c}'")),
        }
    }
}

fn parse_actor(cur: &mut Cursor) -> Result<ActorRef, ParseError> {
    if !cur.try_word("get_actor") {
        return cur.err("expected get_actor(...)");
    }
    cur.eat('(')?;
    let desc_col = cur.pos + 1;
    let desc = cur.string_lit()?;
    let mut parts = desc.split_whitespace();
    let color = parts
        .next()
        .and_then(Color::parse)
        .ok_or_else(|| ParseError { line: cur.line_no, col: desc_col, msg: format!("unknown color in actor description '{desc}'") })?;
    let shape = parts
        .next()
        .and_then(Shape::parse)
        .ok_or_else(|| ParseError { line: cur.line_no, col: desc_col, msg: format!("unknown shape in actor description '{desc}'") })?;
    if parts.next().is_some() {
        return Err(ParseError {
            line: cur.line_no,
            col: desc_col,
            msg: format!("actor description '{desc}' has trailing words"),
        });
    }
    let mut pos = None;
    if cur.try_eat(',') {
        if !cur.try_word("actor_pos") {
            return cur.err("expected actor_pos=");
        }
        cur.eat('=')?;
        cur.eat('(')?;
        let i = cur.int()?;
        cur.eat(',')?;
        let j = cur.int()?;
        cur.eat(')')?;
        if !(0..10).contains(&i) || !(0..10).contains(&j) {
            return cur.err(format!("actor_pos ({i}, {j}) out of the 10x10 grid"));
        }
        pos = Some((i as u8, j as u8));
    }
    cur.eat(')')?;
    Ok(ActorRef { color, shape, pos })
}

fn parse_pose_key(cur: &mut Cursor) -> Result<String, ParseError> {
    if !cur.try_word("pose_dict") {
        return cur.err("expected pose_dict['...']");
    }
    cur.eat('[')?;
    let key = cur.string_lit()?;
    cur.eat(']')?;
    Ok(key)
}

fn parse_pose_literal(cur: &mut Cursor) -> Result<(f32, f32), ParseError> {
    // caller consumed the "Pose" word
    cur.eat('(')?;
    let x = cur.number()?;
    cur.eat(',')?;
    let y = cur.number()?;
    cur.eat(')')?;
    Ok((x, y))
}

fn parse_pose_expr(cur: &mut Cursor) -> Result<PoseExpr, ParseError> {
    cur.skip_ws();
    if cur.try_word("Pose") {
        let (x, y) = parse_pose_literal(cur)?;
        Ok(PoseExpr::Literal { x, y })
    } else if cur.try_word("pose_on_top") {
        cur.eat('(')?;
        let a = parse_actor(cur)?;
        cur.eat(',')?;
        let b = parse_actor(cur)?;
        cur.eat(')')?;
        Ok(PoseExpr::OnTop(a, b))
    } else if cur.src[cur.pos..].trim_start().starts_with("pose_dict") {
        Ok(PoseExpr::Key(parse_pose_key(cur)?))
    } else {
        cur.err("expected a pose expression")
    }
}

fn expect_kw(cur: &mut Cursor, kw: &str) -> Result<(), ParseError> {
    if !cur.try_word(kw) {
        return cur.err(format!("expected {kw}="));
    }
    cur.eat('=')
}

fn parse_ee_pose(cur: &mut Cursor) -> Result<EePoseExpr, ParseError> {
    cur.skip_ws();
    if cur.try_word("pre_pick_ee_pose") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(')')?;
        Ok(EePoseExpr::PrePick { actor })
    } else if cur.try_word("pre_place_ee_pose") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(',')?;
        expect_kw(cur, "target_pose")?;
        let target = parse_pose_expr(cur)?;
        cur.eat(')')?;
        Ok(EePoseExpr::PrePlace { actor, target })
    } else if cur.try_word("pre_push_pose") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(',')?;
        if cur.try_word("topple") {
            cur.eat('=')?;
            let v = cur.bool_lit()?;
            if !v {
                return cur.err("pre_push_pose(topple=False) is not a rendered form");
            }
            cur.eat(')')?;
            Ok(EePoseExpr::PrePushTopple { actor })
        } else {
            expect_kw(cur, "target_pose")?;
            let target = parse_pose_expr(cur)?;
            cur.eat(')')?;
            Ok(EePoseExpr::PrePushTo { actor, target })
        }
    } else if cur.src[cur.pos..].trim_start().starts_with("pose_dict") {
        Ok(EePoseExpr::Key(parse_pose_key(cur)?))
    } else {
        cur.err("expected an end-effector pose expression")
    }
}

fn parse_assign_rhs(cur: &mut Cursor) -> Result<AssignRhs, ParseError> {
    cur.skip_ws();
    if cur.try_word("free_space_next_to") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(',')?;
        let next_to = parse_actor(cur)?;
        cur.eat(',')?;
        expect_kw(cur, "direction")?;
        cur.eat('[')?;
        let dx = cur.int()?;
        cur.eat(',')?;
        let dy = cur.int()?;
        cur.eat(']')?;
        let dir_col = cur.pos;
        let direction = Direction::from_ints(dx as i8, dy as i8).ok_or(ParseError {
            line: cur.line_no,
            col: dir_col,
            msg: format!("direction [{dx}, {dy}] is not a unit cardinal direction"),
        })?;
        cur.eat(',')?;
        expect_kw(cur, "description")?;
        let _desc = cur.string_lit()?; // free text; never affects the result
        cur.eat(')')?;
        Ok(AssignRhs::FreeSpaceNextTo { actor, next_to, direction })
    } else if cur.try_word("free_space") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(')')?;
        Ok(AssignRhs::FreeSpace { actor })
    } else if cur.try_word("get_pose") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(')')?;
        Ok(AssignRhs::GetPose { actor })
    } else if cur.try_word("Pose") {
        let (x, y) = parse_pose_literal(cur)?;
        Ok(AssignRhs::Literal { x, y })
    } else {
        cur.err("expected a pose-valued call on the right-hand side")
    }
}

/// Optional trailing keyword arguments accepted for API fidelity. They are
/// parsed, type-checked, and dropped: the canonical rendering (and the toy
/// dynamics) use the documented defaults.
fn skip_optional_kwargs(cur: &mut Cursor, allowed: &[&str]) -> Result<(), ParseError> {
    while cur.try_eat(',') {
        let name = cur.ident()?;
        if !allowed.contains(&name.as_str()) {
            return cur.err(format!("unknown keyword argument '{name}'"));
        }
        cur.eat('=')?;
        cur.skip_ws();
        match cur.peek() {
            Some('T') | Some('F') => {
                cur.bool_lit()?;
            }
            _ => {
                cur.number()?;
            }
        }
    }
    Ok(())
}

fn parse_command(cur: &mut Cursor) -> Result<Command, ParseError> {
    cur.skip_ws();
    if cur.try_word("done") {
        return Ok(Command::Done);
    }
    if cur.try_word("move3d") {
        cur.eat('(')?;
        expect_kw(cur, "ee_target_pose")?;
        let target = parse_ee_pose(cur)?;
        skip_optional_kwargs(cur, &["match_ori", "vacuum", "extend_bounds", "check_done"])?;
        cur.eat(')')?;
        return Ok(Command::Move3d { target });
    }
    if cur.try_word("pick") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        skip_optional_kwargs(cur, &["lift"])?;
        cur.eat(')')?;
        return Ok(Command::Pick { actor });
    }
    if cur.try_word("place_on_actor") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(',')?;
        expect_kw(cur, "target_actor")?;
        let target_actor = parse_actor(cur)?;
        cur.eat(',')?;
        expect_kw(cur, "target_pose")?;
        let target = parse_pose_expr(cur)?;
        skip_optional_kwargs(cur, &["match_ori_2d", "drop_distance"])?;
        cur.eat(')')?;
        return Ok(Command::PlaceOnActor { actor, target_actor, target });
    }
    if cur.try_word("place") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(',')?;
        expect_kw(cur, "target_pose")?;
        let target = parse_pose_expr(cur)?;
        skip_optional_kwargs(cur, &["match_ori_2d", "drop_distance"])?;
        cur.eat(')')?;
        return Ok(Command::Place { actor, target });
    }
    if cur.try_word("touch") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        let mut push = false;
        let mut topple = false;
        while cur.try_eat(',') {
            if cur.try_word("push") {
                cur.eat('=')?;
                push = cur.bool_lit()?;
            } else if cur.try_word("topple") {
                cur.eat('=')?;
                topple = cur.bool_lit()?;
            } else {
                return cur.err("expected push= or topple=");
            }
        }
        cur.eat(')')?;
        return Ok(Command::Touch { actor, push, topple });
    }
    if cur.try_word("push_along_path") {
        cur.eat('(')?;
        let actor = parse_actor(cur)?;
        cur.eat(',')?;
        expect_kw(cur, "target_pose")?;
        let target = parse_pose_expr(cur)?;
        cur.eat(')')?;
        return Ok(Command::PushAlongPath { actor, target });
    }
    cur.err("unknown function name")
}

/// Parse one statement block (1-2 lines, uniformly commented or live).
pub fn parse(text: &str) -> Result<Instruction, ParseError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(ParseError { line: 1, col: 1, msg: "empty instruction".into() });
    }
    if lines.len() > 2 {
        return Err(ParseError {
            line: lines[2].0,
            col: 1,
            msg: "too many lines in one statement block".into(),
        });
    }
    let commented_flags: Vec<bool> = lines.iter().map(|(_, l)| l.trim_start().starts_with('#')).collect();
    let commented = commented_flags[0];
    if commented_flags.iter().any(|&c| c != commented) {
        return Err(ParseError {
            line: lines[1].0,
            col: 1,
            msg: "mixed commented and live lines in one block".into(),
        });
    }

    let stripped: Vec<(usize, String)> = lines
        .iter()
        .map(|(no, l)| {
            let t = l.trim_start();
            let t = if commented {
                t.strip_prefix('#').unwrap().trim_start()
            } else {
                t
            };
            (*no, t.to_string())
        })
        .collect();

    let (assign, cmd_line) = if stripped.len() == 2 {
        let (no, first) = &stripped[0];
        let mut cur = Cursor::new(first, *no);
        let key = parse_pose_key(&mut cur)?;
        cur.eat('=')?;
        let rhs = parse_assign_rhs(&mut cur)?;
        cur.end()?;
        (Some(Assign { key, rhs }), &stripped[1])
    } else {
        (None, &stripped[0])
    };

    let (no, line) = cmd_line;
    let mut cur = Cursor::new(line, *no);
    // A single line may still be an assignment-only block; that is malformed
    // because every block must end in a command.
    if assign.is_none() && line.trim_start().starts_with("pose_dict") {
        return cur.err("assignment without a command line");
    }
    let command = parse_command(&mut cur)?;
    cur.end()?;
    Ok(Instruction { assign, command, commented })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ast::TemplateId;

    #[test]
    fn roundtrip_pick_with_pos() {
        let text = "pick(get_actor('red cube', actor_pos=(3, 4)))";
        let i = parse(text).unwrap();
        assert_eq!(i.render(), text);
        assert!(!i.commented);
        assert_eq!(i.template(), TemplateId::Pick);
    }

    #[test]
    fn commented_matches_same_template() {
        let live = "move3d(ee_target_pose=pose_dict['pose0'])";
        let commented = "# move3d(ee_target_pose=pose_dict['pose0'])";
        let a = parse(live).unwrap();
        let b = parse(commented).unwrap();
        assert!(!a.commented);
        assert!(b.commented);
        assert_eq!(a.command, b.command);
        assert_eq!(b.render(), commented);
    }

    #[test]
    fn error_position_on_truncated_call() {
        let err = parse("pick(").unwrap_err();
        assert_eq!(err.line, 1);
        assert_eq!(err.col, 6);
    }

    #[test]
    fn unknown_function_is_an_error() {
        let err = parse("grab(get_actor('red cube'))").unwrap_err();
        assert!(err.msg.contains("unknown function"));
    }

    #[test]
    fn unbalanced_quote_is_an_error() {
        let err = parse("pick(get_actor('red cube))").unwrap_err();
        assert!(err.msg.contains("unterminated"));
    }

    #[test]
    fn two_line_block_roundtrip() {
        let text = "pose_dict['pose0'] = free_space_next_to(get_actor('red cube'), \
                    get_actor('blue cylinder'), direction=[1, 0], description='right of')\n\
                    move3d(ee_target_pose=pre_pick_ee_pose(get_actor('red cube')))";
        let i = parse(text).unwrap();
        assert_eq!(i.render(), text);
        assert_eq!(i.template(), TemplateId::AssignNextToMovePrePick);
    }

    #[test]
    fn whitespace_normalizes_to_canonical() {
        let messy = "pick(  get_actor( 'red cube' )  )";
        let i = parse(messy).unwrap();
        assert_eq!(i.render(), "pick(get_actor('red cube'))");
    }

    #[test]
    fn optional_kwargs_accepted_and_normalized() {
        let text = "move3d(ee_target_pose=pose_dict['a'], match_ori=False, check_done=True)";
        let i = parse(text).unwrap();
        assert_eq!(i.render(), "move3d(ee_target_pose=pose_dict['a'])");
        let text = "pick(get_actor('red cube'), lift=0.1)";
        let i = parse(text).unwrap();
        assert_eq!(i.render(), "pick(get_actor('red cube'))");
    }

    #[test]
    fn mixed_comment_block_rejected() {
        let text = "pose_dict['a'] = free_space(get_actor('red cube'))\n# pick(get_actor('red cube'))";
        assert!(parse(text).is_err());
    }

    #[test]
    fn done_parses_both_forms() {
        assert_eq!(parse("done").unwrap().template(), TemplateId::Done);
        let d = parse("# done").unwrap();
        assert!(d.commented);
        assert_eq!(d.render(), "# done");
    }
}
