//! Actor lookup by natural-language description.

use thiserror::Error;

use crate::sim::scene::Scene;
use crate::sim::types::Actor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("no actor matches description '{0}'")]
    UnknownDescription(String),
    #[error("scene has no actors")]
    EmptyScene,
}

/// Unigram precision of `name` tokens against an actor description:
/// |matched tokens| / |name tokens|, exact-token matching.
pub fn description_similarity(name: &str, description: &str) -> f32 {
    let name_tokens: Vec<&str> = name.split_whitespace().collect();
    if name_tokens.is_empty() {
        return 0.0;
    }
    let desc_tokens: Vec<&str> = description.split_whitespace().collect();
    let mut used = vec![false; desc_tokens.len()];
    let mut hits = 0usize;
    for t in &name_tokens {
        if let Some(i) = desc_tokens.iter().enumerate().position(|(i, d)| !used[i] && d == t) {
            used[i] = true;
            hits += 1;
        }
    }
    hits as f32 / name_tokens.len() as f32
}

/// The actor whose rendered description best matches `name`. Ties break by
/// grid distance to `actor_pos` (using the actor's last on-table cell), then
/// by lowest id.
pub fn get_actor<'s>(
    scene: &'s Scene,
    name: &str,
    actor_pos: Option<(u8, u8)>,
) -> Result<&'s Actor, QueryError> {
    if scene.actors.is_empty() {
        return Err(QueryError::EmptyScene);
    }
    let mut best: Option<(&Actor, f32, f32)> = None;
    for a in &scene.actors {
        let sim = description_similarity(name, &a.description());
        let cell = scene.last_table_cell(a.id);
        let posdist = match actor_pos {
            Some((i, j)) => {
                let di = cell.0 as f32 - i as f32;
                let dj = cell.1 as f32 - j as f32;
                (di * di + dj * dj).sqrt()
            }
            None => 0.0,
        };
        let better = match best {
            None => true,
            Some((_, bsim, bdist)) => {
                sim > bsim + 1e-9 || ((sim - bsim).abs() <= 1e-9 && posdist < bdist - 1e-9)
            }
        };
        if better {
            best = Some((a, sim, posdist));
        }
    }
    let (actor, sim, _) = best.unwrap();
    if sim <= 0.0 {
        return Err(QueryError::UnknownDescription(name.to_string()));
    }
    Ok(actor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::task::TaskKind;
    use crate::sim::types::{cell_center, Actor, Color, Pose, Shape};

    fn scene_with(actors: Vec<Actor>) -> Scene {
        let (mut scene, _) = Scene::reset(TaskKind::Pick, 12000).unwrap();
        scene.actors = actors;
        scene.refresh_table_cells();
        scene
    }

    #[test]
    fn unique_description_matches() {
        let (scene, _) = Scene::reset(TaskKind::PlaceOnTop, 12000).unwrap();
        let target = scene.actor(0);
        let found = get_actor(&scene, &target.description(), None).unwrap();
        assert_eq!(found.id, target.id);
    }

    #[test]
    fn tie_breaks_by_position() {
        let (x1, y1) = cell_center(2, 7);
        let (x2, y2) = cell_center(6, 1);
        let scene = scene_with(vec![
            Actor::new(0, Color::Blue, Shape::Cylinder, Pose::at(x2, y2)),
            Actor::new(1, Color::Blue, Shape::Cylinder, Pose::at(x1, y1)),
        ]);
        let found = get_actor(&scene, "blue cylinder", Some((2, 7))).unwrap();
        assert_eq!(found.id, 1);
        // without a position hint the lowest id wins
        let found = get_actor(&scene, "blue cylinder", None).unwrap();
        assert_eq!(found.id, 0);
    }

    #[test]
    fn partial_token_overlap_prefers_majority_match() {
        // "red cubes": exact-token match on "red" only -> 1/2 for the red
        // cube, 0/2 for the blue cube.
        let (x1, y1) = cell_center(3, 3);
        let (x2, y2) = cell_center(6, 6);
        let scene = scene_with(vec![
            Actor::new(0, Color::Red, Shape::Cube, Pose::at(x1, y1)),
            Actor::new(1, Color::Blue, Shape::Cube, Pose::at(x2, y2)),
        ]);
        assert_eq!(description_similarity("red cubes", "red cube"), 0.5);
        assert_eq!(description_similarity("red cubes", "blue cube"), 0.0);
        let found = get_actor(&scene, "red cubes", None).unwrap();
        assert_eq!(found.id, 0);
    }

    #[test]
    fn zero_similarity_is_unknown() {
        let (scene, _) = Scene::reset(TaskKind::Pick, 12000).unwrap();
        assert!(matches!(
            get_actor(&scene, "teapot", None),
            Err(QueryError::UnknownDescription(_))
        ));
    }

    #[test]
    fn repeated_calls_agree() {
        let (scene, _) = Scene::reset(TaskKind::PlaceNextTo, 12013).unwrap();
        let d = scene.actor(1).description();
        let a = get_actor(&scene, &d, Some((4, 4))).unwrap().id;
        let b = get_actor(&scene, &d, Some((4, 4))).unwrap().id;
        assert_eq!(a, b);
    }
}
