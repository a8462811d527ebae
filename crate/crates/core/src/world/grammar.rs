//! The closed caption grammar: templates that realize a scene as token
//! sequences and the exact inverse parser used as a semantic oracle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::{Caption, Vocabulary};
use crate::world::{Color, Relation, Scene, Shape, COLORS, RELATIONS, SHAPES};

/// What a caption can say about an object: its shape and color, no position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectDesc {
    pub shape: Shape,
    pub color: Color,
}

/// Relations normalized so only `LeftOf` and `Above` survive; the inverse
/// surface forms swap their operands instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CanonicalRelation {
    LeftOf,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RelationFact {
    pub first: ObjectDesc,
    pub second: ObjectDesc,
    pub kind: CanonicalRelation,
}

fn canonicalize(a: ObjectDesc, rel: Relation, b: ObjectDesc) -> RelationFact {
    match rel {
        Relation::LeftOf => RelationFact { first: a, second: b, kind: CanonicalRelation::LeftOf },
        Relation::RightOf => RelationFact { first: b, second: a, kind: CanonicalRelation::LeftOf },
        Relation::Above => RelationFact { first: a, second: b, kind: CanonicalRelation::Above },
        Relation::Below => RelationFact { first: b, second: a, kind: CanonicalRelation::Above },
    }
}

/// Canonical semantic content of a scene or caption: the object multiset
/// (sorted) plus the normalized relation, if any.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SceneSemantics {
    pub objects: Vec<ObjectDesc>,
    pub relation: Option<RelationFact>,
}

impl SceneSemantics {
    fn new(mut objects: Vec<ObjectDesc>, relation: Option<RelationFact>) -> Self {
        objects.sort();
        SceneSemantics { objects, relation }
    }
}

impl Scene {
    /// The scene's content as captions can express it.
    pub fn semantics(&self) -> SceneSemantics {
        let descs: Vec<ObjectDesc> =
            self.objects.iter().map(|o| ObjectDesc { shape: o.shape, color: o.color }).collect();
        let relation = self.relation.map(|rel| canonicalize(descs[0], rel, descs[1]));
        SceneSemantics::new(descs, relation)
    }
}

/// Template pieces. `Obj(i)` realizes scene object i as "<color> <shape>";
/// `Rel` realizes the scene relation, `InvRel` its inverse (with the operand
/// mentions swapped in the template itself).
#[derive(Debug, Clone, Copy)]
enum Piece {
    Lit(&'static str),
    Obj(usize),
    Rel,
    InvRel,
}

use Piece::{InvRel, Lit, Obj, Rel};

const ONE_OBJECT: &[&[Piece]] = &[
    &[Lit("a"), Obj(0)],
    &[Lit("the"), Obj(0)],
    &[Lit("there"), Lit("is"), Lit("a"), Obj(0)],
    &[Lit("the"), Lit("picture"), Lit("shows"), Lit("a"), Obj(0)],
    &[Lit("the"), Lit("image"), Lit("contains"), Lit("a"), Obj(0)],
    &[Lit("a"), Lit("single"), Obj(0)],
    &[Lit("the"), Lit("scene"), Lit("shows"), Lit("a"), Obj(0)],
    &[Lit("a"), Obj(0), Lit("drawn"), Lit("on"), Lit("a"), Lit("dark"), Lit("background")],
];

const TWO_RELATED: &[&[Piece]] = &[
    &[Lit("a"), Obj(0), Rel, Lit("a"), Obj(1)],
    &[Lit("a"), Obj(1), InvRel, Lit("a"), Obj(0)],
    &[Lit("the"), Obj(0), Lit("is"), Rel, Lit("the"), Obj(1)],
    &[Lit("the"), Obj(1), Lit("is"), InvRel, Lit("the"), Obj(0)],
    &[Lit("there"), Lit("is"), Lit("a"), Obj(0), Rel, Lit("a"), Obj(1)],
    &[Lit("the"), Lit("picture"), Lit("shows"), Lit("a"), Obj(0), Rel, Lit("a"), Obj(1)],
    &[Lit("the"), Lit("image"), Lit("contains"), Lit("a"), Obj(0), Rel, Lit("a"), Obj(1)],
    &[Lit("the"), Lit("scene"), Lit("shows"), Lit("a"), Obj(0), Rel, Lit("a"), Obj(1)],
];

const TWO_PLAIN: &[&[Piece]] = &[
    &[Lit("a"), Obj(0), Lit("and"), Lit("a"), Obj(1)],
    &[Lit("a"), Obj(1), Lit("and"), Lit("a"), Obj(0)],
    &[Lit("there"), Lit("is"), Lit("a"), Obj(0), Lit("and"), Lit("a"), Obj(1)],
    &[Lit("the"), Lit("picture"), Lit("shows"), Lit("a"), Obj(0), Lit("and"), Lit("a"), Obj(1)],
    &[Lit("the"), Lit("image"), Lit("contains"), Lit("a"), Obj(0), Lit("and"), Lit("a"), Obj(1)],
    &[Lit("the"), Lit("scene"), Lit("shows"), Lit("a"), Obj(0), Lit("and"), Lit("a"), Obj(1)],
];

const THREE_RELATED: &[&[Piece]] = &[
    &[Lit("a"), Obj(0), Rel, Lit("a"), Obj(1), Lit("and"), Lit("a"), Obj(2)],
    &[Lit("a"), Obj(1), InvRel, Lit("a"), Obj(0), Lit("and"), Lit("a"), Obj(2)],
    &[Lit("there"), Lit("is"), Lit("a"), Obj(0), Rel, Lit("a"), Obj(1), Lit("and"), Lit("a"), Obj(2)],
    &[
        Lit("the"),
        Lit("picture"),
        Lit("shows"),
        Lit("a"),
        Obj(0),
        Rel,
        Lit("a"),
        Obj(1),
        Lit("and"),
        Lit("a"),
        Obj(2),
    ],
    &[
        Lit("the"),
        Lit("image"),
        Lit("contains"),
        Lit("a"),
        Obj(0),
        Rel,
        Lit("a"),
        Obj(1),
        Lit("and"),
        Lit("a"),
        Obj(2),
    ],
    &[
        Lit("the"),
        Lit("scene"),
        Lit("shows"),
        Lit("a"),
        Obj(0),
        Rel,
        Lit("a"),
        Obj(1),
        Lit("and"),
        Lit("a"),
        Obj(2),
    ],
    &[Lit("a"), Obj(2), Lit("and"), Lit("a"), Obj(0), Rel, Lit("a"), Obj(1)],
    &[Lit("the"), Obj(0), Lit("is"), Rel, Lit("the"), Obj(1), Lit("and"), Lit("a"), Obj(2)],
];

const THREE_PLAIN: &[&[Piece]] = &[
    &[Lit("a"), Obj(0), Lit("and"), Lit("a"), Obj(1), Lit("and"), Lit("a"), Obj(2)],
    &[Lit("a"), Obj(2), Lit("and"), Lit("a"), Obj(1), Lit("and"), Lit("a"), Obj(0)],
    &[
        Lit("there"),
        Lit("is"),
        Lit("a"),
        Obj(0),
        Lit("and"),
        Lit("a"),
        Obj(1),
        Lit("and"),
        Lit("a"),
        Obj(2),
    ],
    &[
        Lit("the"),
        Lit("picture"),
        Lit("shows"),
        Lit("a"),
        Obj(0),
        Lit("and"),
        Lit("a"),
        Obj(1),
        Lit("and"),
        Lit("a"),
        Obj(2),
    ],
    &[
        Lit("the"),
        Lit("image"),
        Lit("contains"),
        Lit("a"),
        Obj(0),
        Lit("and"),
        Lit("a"),
        Obj(1),
        Lit("and"),
        Lit("a"),
        Obj(2),
    ],
    &[
        Lit("the"),
        Lit("scene"),
        Lit("shows"),
        Lit("a"),
        Obj(0),
        Lit("and"),
        Lit("a"),
        Obj(1),
        Lit("and"),
        Lit("a"),
        Obj(2),
    ],
];

fn templates_for(scene: &Scene) -> &'static [&'static [Piece]] {
    match (scene.objects.len(), scene.relation.is_some()) {
        (1, _) => ONE_OBJECT,
        (2, true) => TWO_RELATED,
        (2, false) => TWO_PLAIN,
        (3, true) => THREE_RELATED,
        (_, false) => THREE_PLAIN,
        (_, true) => THREE_RELATED,
    }
}

fn all_template_sets() -> [&'static [&'static [Piece]]; 5] {
    [ONE_OBJECT, TWO_RELATED, TWO_PLAIN, THREE_RELATED, THREE_PLAIN]
}

fn realize(scene: &Scene, template: &[Piece]) -> Vec<&'static str> {
    let mut words = Vec::new();
    for piece in template {
        match piece {
            Lit(w) => words.push(*w),
            Obj(i) => {
                let o = &scene.objects[*i];
                words.push(o.color.word());
                words.push(o.shape.word());
            }
            Rel => words.extend_from_slice(scene.relation.expect("relational template").words()),
            InvRel => {
                words.extend_from_slice(scene.relation.expect("relational template").inverse().words())
            }
        }
    }
    words
}

/// All distinct surface realizations of a scene, in template order.
pub fn enumerate_captions(vocab: &Vocabulary, scene: &Scene) -> Vec<Caption> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for template in templates_for(scene) {
        let words = realize(scene, template);
        if seen.insert(words.join(" ")) {
            let caption = Caption::from_words(vocab, &words).expect("templates are non-empty");
            debug_assert!(
                caption.ids().iter().all(|&id| id >= 4),
                "grammar must stay closed over the vocabulary"
            );
            out.push(caption);
        }
    }
    out
}

/// k pairwise-distinct captions for the scene, chosen deterministically
/// from the template inventory by seed.
pub fn describe_scene(
    vocab: &Vocabulary,
    scene: &Scene,
    k: usize,
    seed: u64,
) -> Result<Vec<Caption>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut captions = enumerate_captions(vocab, scene);
    if k > captions.len() {
        return Err(Error::NotEnoughTemplates { requested: k, available: captions.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    captions.shuffle(&mut rng);
    captions.truncate(k);
    Ok(captions)
}

/// Parses a caption back to canonical scene semantics. Returns None when the
/// token sequence matches no template: a reportable outcome, not an error.
pub fn parse_caption(vocab: &Vocabulary, caption: &Caption) -> Option<SceneSemantics> {
    let content = caption.content();
    let words: Vec<&str> = content.iter().map(|&id| vocab.token(id)).collect();
    for set in all_template_sets() {
        for template in set {
            if let Some(semantics) = match_template(template, &words) {
                return Some(semantics);
            }
        }
    }
    None
}

fn parse_color(word: &str) -> Option<Color> {
    COLORS.iter().copied().find(|c| c.word() == word)
}

fn parse_shape(word: &str) -> Option<Shape> {
    SHAPES.iter().copied().find(|s| s.word() == word)
}

fn match_template(template: &[Piece], words: &[&str]) -> Option<SceneSemantics> {
    let mut pos = 0usize;
    let mut mentions: Vec<ObjectDesc> = Vec::new();
    // surface relation with the mention indices it connects
    let mut relation: Option<(Relation, usize, usize)> = None;

    for piece in template {
        match piece {
            Lit(w) => {
                if words.get(pos) != Some(w) {
                    return None;
                }
                pos += 1;
            }
            Obj(_) => {
                let color = parse_color(words.get(pos).copied()?)?;
                let shape = parse_shape(words.get(pos + 1).copied()?)?;
                mentions.push(ObjectDesc { shape, color });
                pos += 2;
            }
            Rel | InvRel => {
                let rel = RELATIONS
                    .iter()
                    .copied()
                    .find(|r| words[pos..].starts_with(r.words()))?;
                pos += rel.words().len();
                // relations always sit between two object mentions
                relation = Some((rel, mentions.len() - 1, mentions.len()));
            }
        }
    }
    if pos != words.len() {
        return None;
    }
    let relation = relation.map(|(rel, a, b)| canonicalize(mentions[a], rel, mentions[b]));
    Some(SceneSemantics::new(mentions, relation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{sample_scene, SceneObject, DEFAULT_CANVAS};

    fn vocab() -> Vocabulary {
        Vocabulary::toy_world()
    }

    fn two_object_scene() -> Scene {
        Scene {
            objects: vec![
                SceneObject { shape: Shape::Circle, color: Color::Red, row: 1, col: 0 },
                SceneObject { shape: Shape::Square, color: Color::Blue, row: 1, col: 2 },
            ],
            relation: Some(Relation::LeftOf),
            canvas_size: DEFAULT_CANVAS,
        }
    }

    #[test]
    fn describe_yields_distinct_captions_with_one_parse() {
        let v = vocab();
        let scene = two_object_scene();
        let captions = describe_scene(&v, &scene, 5, 9).unwrap();
        assert_eq!(captions.len(), 5);
        let mut surfaces = std::collections::HashSet::new();
        for c in &captions {
            assert!(surfaces.insert(c.text(&v)), "duplicate surface {:?}", c.text(&v));
            assert_eq!(parse_caption(&v, c), Some(scene.semantics()), "caption {:?}", c.text(&v));
        }
    }

    #[test]
    fn k_of_one_is_singleton() {
        let v = vocab();
        let captions = describe_scene(&v, &two_object_scene(), 1, 0).unwrap();
        assert_eq!(captions.len(), 1);
    }

    #[test]
    fn excessive_k_is_an_error() {
        let v = vocab();
        let err = describe_scene(&v, &two_object_scene(), 100, 0).unwrap_err();
        assert!(matches!(err, Error::NotEnoughTemplates { .. }));
    }

    #[test]
    fn inverse_surface_form_parses_to_same_semantics() {
        let v = vocab();
        let scene = two_object_scene();
        let direct = Caption::from_text(&v, "a red circle left of a blue square").unwrap();
        let inverse = Caption::from_text(&v, "a blue square right of a red circle").unwrap();
        let p1 = parse_caption(&v, &direct).unwrap();
        let p2 = parse_caption(&v, &inverse).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1, scene.semantics());
    }

    #[test]
    fn every_template_round_trips_for_sampled_scenes() {
        let v = vocab();
        for seed in 0..300 {
            let scene = sample_scene(seed);
            for caption in enumerate_captions(&v, &scene) {
                let parsed = parse_caption(&v, &caption);
                assert_eq!(
                    parsed,
                    Some(scene.semantics()),
                    "seed {seed}, caption {:?}",
                    caption.text(&v)
                );
            }
        }
    }

    #[test]
    fn every_scene_class_offers_at_least_six_templates() {
        let v = vocab();
        // relation-free multi-object scenes are constructible by hand
        let mut scenes = vec![two_object_scene()];
        let mut no_rel = two_object_scene();
        no_rel.relation = None;
        scenes.push(no_rel);
        scenes.push(sample_scene(3)); // whatever arity, adds coverage
        for seed in 0..50 {
            scenes.push(sample_scene(seed));
        }
        for scene in &scenes {
            let available = enumerate_captions(&v, scene).len();
            assert!(available >= 6, "scene {scene:?} offers only {available} captions");
        }
    }

    #[test]
    fn token_soup_fails_to_parse() {
        let v = vocab();
        let soup = Caption::from_text(&v, "circle circle of the a").unwrap();
        assert_eq!(parse_caption(&v, &soup), None);
        let truncated = Caption::from_text(&v, "a red circle left of").unwrap();
        assert_eq!(parse_caption(&v, &truncated), None);
    }

    #[test]
    fn parse_ignores_decoder_framing() {
        let v = vocab();
        let plain = Caption::from_text(&v, "a red circle").unwrap();
        let framed = plain.with_eos();
        assert_eq!(parse_caption(&v, &framed), parse_caption(&v, &plain));
    }

    #[test]
    fn describe_is_deterministic_per_seed() {
        let v = vocab();
        let scene = sample_scene(42);
        let a = describe_scene(&v, &scene, 5, 7).unwrap();
        let b = describe_scene(&v, &scene, 5, 7).unwrap();
        assert_eq!(a, b);
        let c = describe_scene(&v, &scene, 5, 8).unwrap();
        assert!(a != c || a.iter().map(|x| x.text(&v)).eq(c.iter().map(|x| x.text(&v))));
    }

    #[test]
    fn duplicate_object_descriptions_still_describe_and_parse() {
        let v = vocab();
        let scene = Scene {
            objects: vec![
                SceneObject { shape: Shape::Circle, color: Color::Red, row: 0, col: 0 },
                SceneObject { shape: Shape::Circle, color: Color::Red, row: 2, col: 2 },
            ],
            relation: Some(Relation::Above),
            canvas_size: DEFAULT_CANVAS,
        };
        let captions = describe_scene(&v, &scene, 5, 0).unwrap();
        for c in &captions {
            assert_eq!(parse_caption(&v, c), Some(scene.semantics()));
        }
    }
}
