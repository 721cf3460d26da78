//! Variant-string vocabularies: one id per variant, or trained subword pieces.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::cohort::Cohort;
use crate::error::{Result, VampError};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
const PAD_STR: &str = "<PAD>";
const UNK_STR: &str = "<UNK>";
pub const VOCAB_SCHEMA: &str = "vampnet-vocab/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabMode {
    Static,
    Subword,
}

impl fmt::Display for VocabMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VocabMode::Static => "STATIC",
            VocabMode::Subword => "SUBWORD",
        })
    }
}

impl std::str::FromStr for VocabMode {
    type Err = VampError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "STATIC" => Ok(VocabMode::Static),
            "SUBWORD" => Ok(VocabMode::Subword),
            other => Err(VampError::Config(format!("unknown vocabulary mode {other:?}"))),
        }
    }
}

/// Bijection between strings and dense ids, with `PAD = 0` and `UNK = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    mode: VocabMode,
    entries: Vec<String>,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
}

impl Vocabulary {
    fn from_entries(mode: VocabMode, content: impl IntoIterator<Item = String>) -> Self {
        let mut entries = vec![PAD_STR.to_string(), UNK_STR.to_string()];
        entries.extend(content);
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let max_piece_chars = entries[2..].iter().map(|s| s.chars().count()).max().unwrap_or(0);
        Vocabulary {
            mode,
            entries,
            index,
            max_piece_chars,
        }
    }

    /// One id per distinct canonical token in `cohort`, in sorted order.
    pub fn build_static(cohort: &Cohort) -> Self {
        let uniq: BTreeSet<&str> = cohort
            .samples
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.canonical()))
            .collect();
        Self::from_entries(VocabMode::Static, uniq.into_iter().map(str::to_string))
    }

    /// Greedy frequency-based merging of adjacent pieces, starting from the
    /// character alphabet, until `target_size` entries (reserved ids
    /// included) exist or no pair is left to merge. Ties go to the
    /// lexicographically smallest pair, so the result is deterministic.
    pub fn train_subword<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Self> {
        let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for w in corpus {
            *word_counts.entry(w.as_ref()).or_insert(0) += 1;
        }
        let alphabet: BTreeSet<String> = word_counts
            .keys()
            .flat_map(|w| w.chars().map(String::from))
            .collect();
        if target_size <= alphabet.len() + 2 {
            return Err(VampError::Config(format!(
                "subword target {target_size} does not exceed alphabet of {} plus reserved ids",
                alphabet.len()
            )));
        }
        let mut pieces: Vec<String> = alphabet.iter().cloned().collect();
        let mut known: BTreeSet<String> = alphabet;
        let mut words: Vec<(Vec<String>, usize)> = word_counts
            .iter()
            .map(|(w, &c)| (w.chars().map(String::from).collect(), c))
            .collect();

        while pieces.len() + 2 < target_size {
            let mut pair_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for (w, c) in &words {
                for p in w.windows(2) {
                    *pair_counts.entry((p[0].as_str(), p[1].as_str())).or_insert(0) += c;
                }
            }
            // max count, smallest pair on ties (BTreeMap iterates ascending)
            let Some(((l, r), _)) = pair_counts
                .iter()
                .fold(None, |best: Option<(&(&str, &str), usize)>, (k, &c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((k, c)),
                })
            else {
                break;
            };
            let (l, r) = (l.to_string(), r.to_string());
            let merged = format!("{l}{r}");
            for (w, _) in words.iter_mut() {
                let mut out = Vec::with_capacity(w.len());
                let mut i = 0;
                while i < w.len() {
                    if i + 1 < w.len() && w[i] == l && w[i + 1] == r {
                        out.push(merged.clone());
                        i += 2;
                    } else {
                        out.push(std::mem::take(&mut w[i]));
                        i += 1;
                    }
                }
                *w = out;
            }
            if known.insert(merged.clone()) {
                pieces.push(merged);
            }
        }
        Ok(Self::from_entries(VocabMode::Subword, pieces))
    }

    pub fn mode(&self) -> VocabMode {
        self.mode
    }

    /// Total entries including the two reserved ids.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() <= 2
    }

    pub fn id(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn entry(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    /// Ids for one canonical variant string. Never empty.
    pub fn encode(&self, token: &str) -> Vec<u32> {
        match self.mode {
            VocabMode::Static => vec![self.id(token).unwrap_or(UNK)],
            VocabMode::Subword => self.longest_match(token),
        }
    }

    fn longest_match(&self, token: &str) -> Vec<u32> {
        let chars: Vec<(usize, char)> = token.char_indices().collect();
        let mut ids = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let start = chars[i].0;
            let mut matched = None;
            let max_len = self.max_piece_chars.min(chars.len() - i);
            for len in (1..=max_len).rev() {
                let end = chars.get(i + len).map_or(token.len(), |c| c.0);
                if let Some(id) = self.id(&token[start..end]) {
                    if id > UNK {
                        matched = Some((id, len));
                        break;
                    }
                }
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    i += len;
                }
                None => {
                    ids.push(UNK);
                    i += 1;
                }
            }
        }
        if ids.is_empty() {
            ids.push(UNK);
        }
        ids
    }

    /// Inverse of `encode` for in-vocabulary static tokens.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.entry(i).unwrap_or(UNK_STR))
            .collect::<Vec<_>>()
            .concat()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{VOCAB_SCHEMA};mode={}\n", self.mode);
        for (i, e) in self.entries.iter().enumerate() {
            s.push_str(&format!("{e}\t{i}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let mode = header
            .strip_prefix(VOCAB_SCHEMA)
            .and_then(|r| r.strip_prefix(";mode="))
            .ok_or_else(|| VampError::parse(1, format!("expected {VOCAB_SCHEMA};mode=... header")))?
            .parse::<VocabMode>()?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| VampError::parse(i + 2, "expected token<TAB>id"))?;
            let id: usize = id
                .parse()
                .map_err(|_| VampError::parse(i + 2, format!("bad id {id:?}")))?;
            if id != entries.len() {
                return Err(VampError::parse(i + 2, "ids must be dense and ascending"));
            }
            entries.push(tok.to_string());
        }
        if entries.len() < 2 || entries[0] != PAD_STR || entries[1] != UNK_STR {
            return Err(VampError::parse(2, "reserved PAD/UNK entries missing"));
        }
        Ok(Self::from_entries(mode, entries.into_iter().skip(2)))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| VampError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let t = fs::read_to_string(path).map_err(|e| VampError::io(path, e))?;
        Self::from_text(&t)
    }
}
