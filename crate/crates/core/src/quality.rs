//! Caption quality: CIDEr-D against co-references, binned into discrete
//! control levels.
//!
//! Default tables have three levels. Boundary scores fall in the lower
//! bin, so with cuts `[c0, c1]` a score `x` gets level 0 when `x <= c0`,
//! level 1 when `c0 < x <= c1` and level 2 when `x > c1`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metrics::{build_df_stats, cider, Caption, CiderVariant, DfStats, ImageId, RefSet, Token};
use crate::{Error, Result};

/// A quality control level; 0 is the lowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityLevel(pub usize);

impl QualityLevel {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for QualityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which training phase a table belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableMode {
    #[serde(rename = "XE")]
    Xe,
    #[serde(rename = "RL")]
    Rl,
}

impl fmt::Display for TableMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableMode::Xe => "XE",
            TableMode::Rl => "RL",
        })
    }
}

impl FromStr for TableMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "XE" => Ok(TableMode::Xe),
            "RL" => Ok(TableMode::Rl),
            _ => Err(Error::Config(format!("unknown table mode {s:?}"))),
        }
    }
}

/// Ascending cut points partitioning scores into `cuts.len() + 1` levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    mode: TableMode,
    cuts: Vec<f64>,
}

impl ThresholdTable {
    pub const XE_CUTS: [f64; 2] = [2.3, 2.5];
    pub const RL_CUTS: [f64; 2] = [0.7, 1.3];

    pub fn new(mode: TableMode, cuts: Vec<f64>) -> Result<Self> {
        if cuts.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("threshold cuts must be finite".into()));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("threshold cuts must be strictly increasing: {cuts:?}")));
        }
        Ok(ThresholdTable { mode, cuts })
    }

    pub fn xe() -> Self {
        ThresholdTable {
            mode: TableMode::Xe,
            cuts: Self::XE_CUTS.to_vec(),
        }
    }

    pub fn rl() -> Self {
        ThresholdTable {
            mode: TableMode::Rl,
            cuts: Self::RL_CUTS.to_vec(),
        }
    }

    /// A one-level table: every score maps to level 0.
    pub fn single(mode: TableMode) -> Self {
        ThresholdTable { mode, cuts: Vec::new() }
    }

    pub fn default_for(mode: TableMode) -> Self {
        match mode {
            TableMode::Xe => Self::xe(),
            TableMode::Rl => Self::rl(),
        }
    }

    pub fn mode(&self) -> TableMode {
        self.mode
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn n_levels(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn highest(&self) -> QualityLevel {
        QualityLevel(self.cuts.len())
    }
}

pub fn assign_level(x: f64, table: &ThresholdTable) -> QualityLevel {
    QualityLevel(table.cuts.iter().filter(|&&c| x > c).count())
}

/// Cut points at the `i / levels` empirical quantiles of `scores`, for
/// balancing bins on a particular corpus. Fails when ties make two cuts
/// coincide.
pub fn quantile_cuts(scores: &[f64], levels: usize, mode: TableMode) -> Result<ThresholdTable> {
    if levels == 0 {
        return Err(Error::Config("need at least one level".into()));
    }
    if scores.len() < levels {
        return Err(Error::Config(format!("{} scores cannot fill {levels} levels", scores.len())));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts = (1..levels)
        .map(|i| sorted[(i * sorted.len()) / levels - 1])
        .collect();
    ThresholdTable::new(mode, cuts)
}

/// CIDEr of `cand` against `refs`. Without self-inclusion, one copy of
/// `cand` is removed from the references first.
pub fn score_caption_quality(
    cand: &Caption,
    refs: &RefSet,
    stats: &DfStats,
    self_inclusion: bool,
    variant: CiderVariant,
) -> Result<f64> {
    if self_inclusion {
        return Ok(cider(cand, refs, stats, variant));
    }
    match refs.refs().iter().position(|r| r == cand) {
        None => Ok(cider(cand, refs, stats, variant)),
        Some(i) => {
            let others = leave_out(refs, i)?;
            Ok(cider(cand, &others, stats, variant))
        }
    }
}

fn leave_out(refs: &RefSet, i: usize) -> Result<RefSet> {
    let others: Vec<Caption> = refs
        .refs()
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, c)| c.clone())
        .collect();
    if others.is_empty() {
        return Err(Error::DegenerateRefSet(refs.image_id.0.clone()));
    }
    RefSet::new(refs.image_id.clone(), others)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedCaption {
    pub caption: Caption,
    pub quality_score: f64,
    pub level: QualityLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub image_id: ImageId,
    pub captions: Vec<AnnotatedCaption>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub mode: TableMode,
    pub images: Vec<AnnotatedImage>,
    /// Caption count per level, including empty levels.
    pub histogram: Vec<usize>,
}

impl Annotation {
    pub fn len(&self) -> usize {
        self.images.iter().map(|i| i.captions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotateOptions {
    pub self_inclusion: bool,
    pub variant: CiderVariant,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions {
            self_inclusion: true,
            variant: CiderVariant::CiderD,
        }
    }
}

/// Scores every reference caption against its own image's references and
/// assigns a level. Document frequencies come from `corpus` itself.
pub fn annotate_dataset(corpus: &[RefSet], table: &ThresholdTable, opts: AnnotateOptions) -> Result<Annotation> {
    let stats = build_df_stats(corpus)?;
    annotate_with_stats(corpus, &stats, table, opts)
}

pub fn annotate_with_stats(
    corpus: &[RefSet],
    stats: &DfStats,
    table: &ThresholdTable,
    opts: AnnotateOptions,
) -> Result<Annotation> {
    let mut histogram = vec![0; table.n_levels()];
    let mut images = Vec::with_capacity(corpus.len());
    for set in corpus {
        let mut captions = Vec::with_capacity(set.len());
        for (i, c) in set.refs().iter().enumerate() {
            let quality_score = if opts.self_inclusion {
                cider(c, set, stats, opts.variant)
            } else {
                cider(c, &leave_out(set, i)?, stats, opts.variant)
            };
            let level = assign_level(quality_score, table);
            histogram[level.0] += 1;
            captions.push(AnnotatedCaption {
                caption: c.clone(),
                quality_score,
                level,
            });
        }
        images.push(AnnotatedImage {
            image_id: set.image_id.clone(),
            captions,
        });
    }
    Ok(Annotation {
        mode: table.mode(),
        images,
        histogram,
    })
}

/// One line of the annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: ImageId,
    pub tokens: Vec<Token>,
    pub quality_score: f64,
    pub level: QualityLevel,
    pub table_mode: TableMode,
}

/// Writes one JSON object per caption, one per line.
pub fn write_annotations<W: Write>(ann: &Annotation, mut out: W) -> Result<()> {
    for img in &ann.images {
        for c in &img.captions {
            let rec = AnnotationRecord {
                image_id: img.image_id.clone(),
                tokens: c.caption.tokens().to_vec(),
                quality_score: c.quality_score,
                level: c.level,
                table_mode: ann.mode,
            };
            serde_json::to_writer(&mut out, &rec).map_err(|e| Error::Format(e.to_string()))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads an annotation file back, regrouping consecutive records by image.
/// The histogram is sized by the highest level present.
pub fn read_annotations<R: BufRead>(input: R) -> Result<Annotation> {
    let mut images: Vec<AnnotatedImage> = Vec::new();
    let mut mode = None;
    let mut histogram: Vec<usize> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        match mode {
            None => mode = Some(rec.table_mode),
            Some(m) if m != rec.table_mode => {
                return Err(Error::Format(format!("line {}: mixed table modes", lineno + 1)));
            }
            _ => {}
        }
        if histogram.len() <= rec.level.0 {
            histogram.resize(rec.level.0 + 1, 0);
        }
        histogram[rec.level.0] += 1;
        let caption = Caption::new(rec.tokens)?;
        let ac = AnnotatedCaption {
            caption,
            quality_score: rec.quality_score,
            level: rec.level,
        };
        match images.last_mut() {
            Some(img) if img.image_id == rec.image_id => img.captions.push(ac),
            _ => images.push(AnnotatedImage {
                image_id: rec.image_id,
                captions: vec![ac],
            }),
        }
    }
    let mode = mode.ok_or_else(|| Error::Format("annotation file has no records".into()))?;
    Ok(Annotation { mode, images, histogram })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(s: &str) -> Caption {
        Caption::from_words(&s.split_whitespace().collect::<Vec<_>>()).unwrap()
    }

    fn set(id: &str, refs: &[&str]) -> RefSet {
        RefSet::new(id.into(), refs.iter().map(|r| cap(r)).collect()).unwrap()
    }

    #[test]
    fn examples_between_and_at_cuts() {
        assert_eq!(assign_level(2.4, &ThresholdTable::xe()), QualityLevel(1));
        assert_eq!(assign_level(2.3, &ThresholdTable::xe()), QualityLevel(0));
        assert_eq!(assign_level(1.31, &ThresholdTable::rl()), QualityLevel(2));
    }

    #[test]
    fn boundaries_at_each_cut() {
        for table in [ThresholdTable::xe(), ThresholdTable::rl()] {
            for (i, &c) in table.cuts().iter().enumerate() {
                assert_eq!(assign_level(c, &table).0, i);
                assert_eq!(assign_level(c - 1e-12, &table).0, i);
                assert_eq!(assign_level(c + 1e-12, &table).0, i + 1);
            }
        }
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(ThresholdTable::new(TableMode::Xe, vec![2.5, 2.3]).is_err());
        assert!(ThresholdTable::new(TableMode::Xe, vec![1.0, 1.0]).is_err());
        assert!(ThresholdTable::new(TableMode::Xe, vec![f64::NAN]).is_err());
        let t = ThresholdTable::new(TableMode::Rl, vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(t.n_levels(), 4);
        assert_eq!(assign_level(5.0, &t), QualityLevel(3));
    }

    #[test]
    fn single_level_table() {
        let t = ThresholdTable::single(TableMode::Rl);
        assert_eq!(assign_level(9.9, &t), QualityLevel(0));
        assert_eq!(t.highest(), QualityLevel(0));
    }

    #[test]
    fn quantile_cuts_balance() {
        let scores: Vec<f64> = (1..=9).map(f64::from).collect();
        let t = quantile_cuts(&scores, 3, TableMode::Xe).unwrap();
        assert_eq!(t.cuts(), &[3.0, 6.0]);
        let mut hist = [0; 3];
        for s in &scores {
            hist[assign_level(*s, &t).0] += 1;
        }
        assert_eq!(hist, [3, 3, 3]);
        assert!(quantile_cuts(&[1.0, 1.0, 1.0], 3, TableMode::Xe).is_err());
    }

    #[test]
    fn leave_one_out_needs_two_refs() {
        let corpus = vec![set("A", &["a b c"]), set("B", &["d e f"])];
        let stats = build_df_stats(&corpus).unwrap();
        let c = cap("a b c");
        let err = score_caption_quality(&c, &corpus[0], &stats, false, CiderVariant::CiderD);
        assert!(matches!(err, Err(Error::DegenerateRefSet(_))));
        assert!(score_caption_quality(&c, &corpus[0], &stats, true, CiderVariant::CiderD).is_ok());
    }

    #[test]
    fn flag_irrelevant_when_not_member() {
        let corpus = vec![set("A", &["a b c", "a b d"]), set("B", &["d e f"])];
        let stats = build_df_stats(&corpus).unwrap();
        let c = cap("a b e");
        let with = score_caption_quality(&c, &corpus[0], &stats, true, CiderVariant::CiderD).unwrap();
        let without = score_caption_quality(&c, &corpus[0], &stats, false, CiderVariant::CiderD).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn identical_captions_get_identical_levels() {
        let corpus = vec![
            set("A", &["a b c d", "a b c d", "a b c d"]),
            set("B", &["e f g h", "e f g h", "e f g h"]),
        ];
        let ann = annotate_dataset(&corpus, &ThresholdTable::xe(), AnnotateOptions::default()).unwrap();
        let first = &ann.images[0].captions[0];
        for img in &ann.images {
            for c in &img.captions {
                assert_eq!(c.quality_score, first.quality_score);
                assert_eq!(c.level, first.level);
            }
        }
        assert_eq!(ann.histogram.iter().sum::<usize>(), 6);
    }

    #[test]
    fn histogram_reports_empty_levels() {
        let corpus = vec![set("A", &["a b", "c d"]), set("B", &["e f", "g h"])];
        let ann = annotate_dataset(&corpus, &ThresholdTable::xe(), AnnotateOptions::default()).unwrap();
        assert_eq!(ann.histogram.len(), 3);
        assert_eq!(ann.histogram[2], 0);
    }

    #[test]
    fn annotation_file_round_trip() {
        let corpus = vec![set("A", &["a b c", "a b d"]), set("B", &["d e f", "x y"])];
        let ann = annotate_dataset(&corpus, &ThresholdTable::xe(), AnnotateOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_annotations(&ann, &mut buf).unwrap();
        let back = read_annotations(&buf[..]).unwrap();
        assert_eq!(back.images, ann.images);
        let mut again = Vec::new();
        write_annotations(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }
}
