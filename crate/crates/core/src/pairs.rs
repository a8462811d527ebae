//! Paraphrase input-target pairs built from grouped multi-caption records.
//!
//! Captions of one visual sample are mutual paraphrases; every ordered pair
//! (i, j) with i != j inside a group becomes a training sample. No pairs
//! cross groups.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Caption, Vocabulary};
use crate::world::corpus::Corpus;

pub const GROUPED_SCHEMA_VERSION: u32 = 1;

/// Captions that describe the same underlying sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupedCaptions {
    pub sample_id: String,
    pub captions: Vec<Caption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub num_samples: usize,
    pub num_captions: usize,
    /// populated when every group has the same caption count
    pub captions_per_sample: Option<usize>,
    pub num_pairs: u64,
}

/// All ordered within-group pairs, in group order then source-major order.
/// Lazy: group lists stay unmaterialized, so counting millions of pairs is
/// cheap.
pub fn make_pairs(
    groups: &[GroupedCaptions],
) -> impl Iterator<Item = (&Caption, &Caption)> + '_ {
    groups.iter().flat_map(|group| {
        group.captions.iter().enumerate().flat_map(move |(i, source)| {
            group
                .captions
                .iter()
                .enumerate()
                .filter(move |(j, _)| *j != i)
                .map(move |(_, target)| (source, target))
        })
    })
}

/// Like `make_pairs` but keeps at most `max_per_group` pairs per group,
/// sampled without replacement by seed. Keeps paraphraser training
/// minutes-scale on large groups.
pub fn make_pairs_capped(
    groups: &[GroupedCaptions],
    max_per_group: usize,
    seed: u64,
) -> Vec<(Caption, Caption)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for group in groups {
        let k = group.captions.len();
        let mut indices: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        if indices.len() > max_per_group {
            indices.shuffle(&mut rng);
            indices.truncate(max_per_group);
        }
        out.extend(
            indices
                .into_iter()
                .map(|(i, j)| (group.captions[i].clone(), group.captions[j].clone())),
        );
    }
    out
}

/// Counts consistent with `make_pairs`: sum over groups of k(k-1).
pub fn pair_stats(groups: &[GroupedCaptions]) -> PairStats {
    let num_samples = groups.len();
    let num_captions: usize = groups.iter().map(|g| g.captions.len()).sum();
    let num_pairs: u64 = groups
        .iter()
        .map(|g| {
            let k = g.captions.len() as u64;
            k * k.saturating_sub(1)
        })
        .sum();
    let captions_per_sample = match groups.first() {
        Some(first) if groups.iter().all(|g| g.captions.len() == first.captions.len()) => {
            Some(first.captions.len())
        }
        _ => None,
    };
    PairStats { num_samples, num_captions, captions_per_sample, num_pairs }
}

/// Grouped-caption JSON: the common captioning-annotation layout, so real
/// files can be adapted with at most a renaming step.
#[derive(Debug, Serialize, Deserialize)]
struct GroupedJson {
    version: u32,
    images: Vec<GroupedImage>,
    annotations: Vec<GroupedAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupedImage {
    id: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupedAnnotation {
    image_id: u64,
    caption: String,
}

/// Reads grouped captions from the documented JSON schema. Captions are
/// lowercased, whitespace-tokenized, and mapped through the vocabulary with
/// UNK fallback. Groups appear in image order; captions in file order.
pub fn ingest_grouped_json(path: &Path, vocab: &Vocabulary) -> Result<Vec<GroupedCaptions>> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let parsed: GroupedJson = serde_json::from_str(&raw).map_err(|e| Error::MalformedFile {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if parsed.version != GROUPED_SCHEMA_VERSION {
        return Err(Error::UnknownSchemaVersion {
            found: parsed.version,
            expected: GROUPED_SCHEMA_VERSION,
        });
    }
    let mut groups: Vec<GroupedCaptions> = parsed
        .images
        .iter()
        .map(|img| GroupedCaptions { sample_id: img.id.to_string(), captions: Vec::new() })
        .collect();
    let index: std::collections::HashMap<u64, usize> =
        parsed.images.iter().enumerate().map(|(i, img)| (img.id, i)).collect();
    for annotation in &parsed.annotations {
        let slot = index.get(&annotation.image_id).ok_or_else(|| Error::MalformedFile {
            path: path.to_path_buf(),
            detail: format!("annotation references unknown image id {}", annotation.image_id),
        })?;
        groups[*slot].captions.push(Caption::from_text(vocab, &annotation.caption)?);
    }
    Ok(groups)
}

/// A toy corpus manifest is already grouped: one group per record.
pub fn groups_from_corpus(corpus: &Corpus) -> Vec<GroupedCaptions> {
    corpus
        .manifest
        .records
        .iter()
        .zip(&corpus.captions)
        .map(|(record, captions)| GroupedCaptions {
            sample_id: record.id.to_string(),
            captions: captions.clone(),
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    source_tokens: Vec<String>,
    target_tokens: Vec<String>,
}

/// One JSON record per line: {source_tokens, target_tokens}.
pub fn write_pairs<'a, W: Write>(
    mut w: W,
    pairs: impl Iterator<Item = (&'a Caption, &'a Caption)>,
    vocab: &Vocabulary,
) -> Result<()> {
    for (source, target) in pairs {
        let record = PairRecord {
            source_tokens: source.words(vocab).iter().map(|s| s.to_string()).collect(),
            target_tokens: target.words(vocab).iter().map(|s| s.to_string()).collect(),
        };
        let line = serde_json::to_string(&record)?;
        writeln!(w, "{line}").map_err(|e| Error::io("write pairs file", e))?;
    }
    Ok(())
}

pub fn read_pairs(path: &Path, vocab: &Vocabulary) -> Result<Vec<(Caption, Caption)>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let reader = std::io::BufReader::new(file);
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedFile {
            path: path.to_path_buf(),
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        pairs.push((
            Caption::from_words(vocab, &record.source_tokens)?,
            Caption::from_words(vocab, &record.target_tokens)?,
        ));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::UNK;
    use proptest::prelude::*;

    fn group(id: &str, k: usize, base: u32) -> GroupedCaptions {
        GroupedCaptions {
            sample_id: id.to_string(),
            captions: (0..k).map(|i| Caption::new(vec![base + i as u32])).collect(),
        }
    }

    #[test]
    fn ordered_pairs_without_self_pairs() {
        let groups = vec![group("g", 3, 10)];
        let pairs: Vec<(Vec<u32>, Vec<u32>)> = make_pairs(&groups)
            .map(|(s, t)| (s.ids().to_vec(), t.ids().to_vec()))
            .collect();
        assert_eq!(
            pairs,
            vec![
                (vec![10], vec![11]),
                (vec![10], vec![12]),
                (vec![11], vec![10]),
                (vec![11], vec![12]),
                (vec![12], vec![10]),
                (vec![12], vec![11]),
            ]
        );
    }

    #[test]
    fn no_cross_group_pairs_and_singletons_contribute_nothing() {
        let groups = vec![group("a", 1, 10), group("b", 2, 20)];
        let pairs: Vec<_> = make_pairs(&groups).collect();
        assert_eq!(pairs.len(), 2);
        for (s, t) in pairs {
            assert!(s.ids()[0] >= 20 && t.ids()[0] >= 20);
        }
    }

    #[test]
    fn stats_match_reported_dataset_arithmetic() {
        // 10,000 videos with 20 sentences each: 10,000 x 20 x 19 pairs
        let msrvtt: Vec<GroupedCaptions> = (0..10_000).map(|i| group(&i.to_string(), 20, 4)).collect();
        let stats = pair_stats(&msrvtt);
        assert_eq!(stats.num_pairs, 3_800_000);
        assert_eq!(stats.captions_per_sample, Some(20));
        assert_eq!(stats.num_pairs, make_pairs(&msrvtt).count() as u64);
    }

    #[test]
    fn empty_input_gives_zero_stats() {
        let stats = pair_stats(&[]);
        assert_eq!(stats.num_samples, 0);
        assert_eq!(stats.num_captions, 0);
        assert_eq!(stats.num_pairs, 0);
        assert_eq!(stats.captions_per_sample, None);
    }

    #[test]
    fn capped_sampling_is_deterministic_and_bounded() {
        let groups = vec![group("a", 5, 10), group("b", 5, 30)];
        let a = make_pairs_capped(&groups, 7, 99);
        let b = make_pairs_capped(&groups, 7, 99);
        assert_eq!(a, b);
        assert_eq!(a.len(), 14);
        // all sampled pairs are real ordered pairs
        let full: std::collections::HashSet<(Vec<u32>, Vec<u32>)> = make_pairs(&groups)
            .map(|(s, t)| (s.ids().to_vec(), t.ids().to_vec()))
            .collect();
        for (s, t) in &a {
            assert!(full.contains(&(s.ids().to_vec(), t.ids().to_vec())));
        }
    }

    #[test]
    fn grouped_json_round_trip() {
        let vocab = Vocabulary::toy_world();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grouped.json");
        std::fs::write(
            &path,
            serde_json::json!({
                "version": 1,
                "images": [{"id": 7}],
                "annotations": [
                    {"image_id": 7, "caption": "A Red Circle"},
                    {"image_id": 7, "caption": "a zebra"},
                    {"image_id": 7, "caption": "the red circle"},
                    {"image_id": 7, "caption": "there is a red circle"},
                    {"image_id": 7, "caption": "a single red circle"},
                ],
            })
            .to_string(),
        )
        .unwrap();
        let groups = ingest_grouped_json(&path, &vocab).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].captions.len(), 5);
        // lowercased and in-vocabulary
        assert_eq!(groups[0].captions[0].text(&vocab), "a red circle");
        // out-of-vocabulary word becomes UNK
        assert_eq!(groups[0].captions[1].ids()[1], UNK);
    }

    #[test]
    fn unknown_version_and_malformed_files_are_errors() {
        let vocab = Vocabulary::toy_world();
        let dir = tempfile::tempdir().unwrap();
        let bad_version = dir.path().join("v9.json");
        std::fs::write(
            &bad_version,
            r#"{"version": 9, "images": [], "annotations": []}"#,
        )
        .unwrap();
        assert!(matches!(
            ingest_grouped_json(&bad_version, &vocab),
            Err(Error::UnknownSchemaVersion { found: 9, .. })
        ));
        let garbage = dir.path().join("garbage.json");
        std::fs::write(&garbage, "not json").unwrap();
        assert!(matches!(
            ingest_grouped_json(&garbage, &vocab),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn pairs_file_round_trip() {
        let vocab = Vocabulary::toy_world();
        let groups = vec![GroupedCaptions {
            sample_id: "0".into(),
            captions: vec![
                Caption::from_text(&vocab, "a red circle").unwrap(),
                Caption::from_text(&vocab, "the red circle").unwrap(),
            ],
        }];
        let mut buf = Vec::new();
        write_pairs(&mut buf, make_pairs(&groups), &vocab).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        std::fs::write(&path, &buf).unwrap();
        let pairs = read_pairs(&path, &vocab).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].0.text(&vocab), "a red circle");
        assert_eq!(pairs[0].1.text(&vocab), "the red circle");
    }

    proptest! {
        #[test]
        fn pair_count_matches_brute_force_and_is_symmetric(
            sizes in proptest::collection::vec(0usize..6, 0..5)
        ) {
            let groups: Vec<GroupedCaptions> = sizes
                .iter()
                .enumerate()
                .map(|(i, &k)| group(&i.to_string(), k, 10 + 10 * i as u32))
                .collect();
            let expected: usize = sizes.iter().map(|&k| k * k.saturating_sub(1)).sum();
            let pairs: Vec<(Vec<u32>, Vec<u32>)> = make_pairs(&groups)
                .map(|(s, t)| (s.ids().to_vec(), t.ids().to_vec()))
                .collect();
            prop_assert_eq!(pairs.len(), expected);
            prop_assert_eq!(pair_stats(&groups).num_pairs, expected as u64);
            // symmetry: (a, b) present iff (b, a) present; no self-pairs
            let set: std::collections::HashSet<_> = pairs.iter().cloned().collect();
            for (s, t) in &pairs {
                prop_assert!(set.contains(&(t.clone(), s.clone())));
                prop_assert!(s != t);
            }
        }
    }
}
