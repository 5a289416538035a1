//! Desk-scale corpus where every phrase appears both figuratively (labeled) and
//! literally (all `O`), so literal usages are hard negatives by construction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, LabeledSentence, SplitRatios, Tag};
use crate::error::{Error, Result};

pub const DEFAULT_CLASS: &str = "idiom";

/// Placeholder for the phrase inside a template.
const PHRASE_SLOT: &str = "{P}";
/// Placeholder for a random filler word.
const FILLER_SLOT: &str = "{w}";

/// A phrase together with the contexts that make it figurative or literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseEntry {
    pub surface: String,
    pub figurative: Vec<String>,
    pub literal: Vec<String>,
}

impl PhraseEntry {
    fn new(surface: &str, figurative: &[&str], literal: &[&str]) -> Self {
        PhraseEntry {
            surface: surface.into(),
            figurative: figurative.iter().map(|s| s.to_string()).collect(),
            literal: literal.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.surface.split_whitespace().next().is_none() {
            return Err(Error::Config("phrase with empty surface form".into()));
        }
        if self.figurative.is_empty() || self.literal.is_empty() {
            return Err(Error::Config(format!(
                "phrase `{}` needs at least one figurative and one literal template",
                self.surface
            )));
        }
        for t in self.figurative.iter().chain(&self.literal) {
            if t.matches(PHRASE_SLOT).count() != 1 {
                return Err(Error::Config(format!(
                    "template {t:?} must contain {PHRASE_SLOT} exactly once"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Number of distinct filler pseudo-words.
    pub vocab_size: usize,
    pub phrases: Vec<PhraseEntry>,
    pub train_count: usize,
    pub dev_count: usize,
    pub test_count: usize,
    /// Fraction of sentences whose phrase is used figuratively.
    pub idiom_rate: f64,
    /// Up to this many filler words are added before and after each template.
    pub max_padding: usize,
    pub class: String,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            vocab_size: 200,
            phrases: default_inventory(),
            train_count: 2000,
            dev_count: 250,
            test_count: 250,
            idiom_rate: 0.5,
            max_padding: 2,
            class: DEFAULT_CLASS.into(),
            seed: 0,
        }
    }
}

/// Flat key/value form of [`SynthesisConfig`]; phrases come from an optional JSON file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatSynthesisConfig {
    vocab_size: Option<usize>,
    train_count: Option<usize>,
    dev_count: Option<usize>,
    test_count: Option<usize>,
    idiom_rate: Option<f64>,
    max_padding: Option<usize>,
    class: Option<String>,
    seed: Option<u64>,
    phrases_file: Option<String>,
}

impl SynthesisConfig {
    /// Reads `key = value` lines. A relative `phrases_file` resolves against `base_dir`.
    pub fn from_flat_str(text: &str, base_dir: &Path) -> Result<Self> {
        let flat: FlatSynthesisConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = SynthesisConfig::default();
        macro_rules! take {
            ($($field:ident),*) => { $(if let Some(v) = flat.$field { cfg.$field = v; })* };
        }
        take!(vocab_size, train_count, dev_count, test_count, idiom_rate, max_padding, class, seed);
        if let Some(file) = flat.phrases_file {
            let path = base_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            cfg.phrases = serde_json::from_str(&text)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.idiom_rate) {
            return Err(Error::Config(format!(
                "idiom_rate must lie in [0, 1], got {}",
                self.idiom_rate
            )));
        }
        if self.phrases.is_empty() {
            return Err(Error::Config("phrase inventory is empty".into()));
        }
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        if self.class.is_empty() || self.class.contains(char::is_whitespace) {
            return Err(Error::Config(format!("invalid class name {:?}", self.class)));
        }
        self.phrases.iter().try_for_each(PhraseEntry::validate)
    }
}

/// Deterministic pseudo-word for a filler index, e.g. `bako`, `mirute`.
fn filler_word(index: usize) -> String {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let syllables = ONSETS.len() * VOWELS.len();
    // offset past the one-syllable words so every filler has at least two
    let mut n = index + syllables;
    let mut word = String::new();
    loop {
        let s = n % syllables;
        word.push_str(ONSETS[s / VOWELS.len()]);
        word.push_str(VOWELS[s % VOWELS.len()]);
        n /= syllables;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    word
}

struct Generator<'a> {
    cfg: &'a SynthesisConfig,
    fillers: Vec<String>,
}

impl Generator<'_> {
    fn sentence(
        &self,
        id: String,
        phrase: &PhraseEntry,
        figurative: bool,
        rng: &mut ChaCha8Rng,
    ) -> LabeledSentence {
        let templates = if figurative {
            &phrase.figurative
        } else {
            &phrase.literal
        };
        let template = templates.choose(rng).expect("validated non-empty");
        let mut tokens: Vec<String> = Vec::new();
        let mut labels: Vec<Tag> = Vec::new();
        let pad = |tokens: &mut Vec<String>, labels: &mut Vec<Tag>, rng: &mut ChaCha8Rng| {
            for _ in 0..rng.gen_range(0..=self.cfg.max_padding) {
                tokens.push(self.fillers.choose(rng).unwrap().clone());
                labels.push(Tag::Outside);
            }
        };
        pad(&mut tokens, &mut labels, rng);
        for piece in template.split_whitespace() {
            if piece == PHRASE_SLOT {
                for (k, w) in phrase.surface.split_whitespace().enumerate() {
                    tokens.push(w.to_string());
                    labels.push(match (figurative, k) {
                        (false, _) => Tag::Outside,
                        (true, 0) => Tag::begin(&self.cfg.class),
                        (true, _) => Tag::inside(&self.cfg.class),
                    });
                }
            } else if piece == FILLER_SLOT {
                tokens.push(self.fillers.choose(rng).unwrap().clone());
                labels.push(Tag::Outside);
            } else {
                tokens.push(piece.to_string());
                labels.push(Tag::Outside);
            }
        }
        pad(&mut tokens, &mut labels, rng);
        LabeledSentence::new(id, tokens, labels).expect("generated sentence is well formed")
    }

    fn split(&self, name: &str, count: usize, rng: &mut ChaCha8Rng) -> Vec<LabeledSentence> {
        let n_fig = (count as f64 * self.cfg.idiom_rate).round() as usize;
        // phrases cycle so each one gets an equal share; figurative flags are
        // spread independently so each phrase sees both usages
        let mut plan: Vec<(usize, bool)> = (0..count)
            .map(|i| (i % self.cfg.phrases.len(), i < n_fig))
            .collect();
        let mut flags: Vec<bool> = plan.iter().map(|p| p.1).collect();
        flags.shuffle(rng);
        for (p, f) in plan.iter_mut().zip(flags) {
            p.1 = f;
        }
        plan.shuffle(rng);
        plan.into_iter()
            .enumerate()
            .map(|(i, (p, fig))| self.sentence(format!("{name}-{i:05}"), &self.cfg.phrases[p], fig, rng))
            .collect()
    }
}

/// Generates train/dev/test splits. Identical configs give identical corpora.
pub fn generate_synthetic_corpus(config: &SynthesisConfig) -> Result<DatasetSplit> {
    config.validate()?;
    let generator = Generator {
        cfg: config,
        fillers: (0..config.vocab_size).map(filler_word).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = generator.split("train", config.train_count, &mut rng);
    let dev = generator.split("dev", config.dev_count, &mut rng);
    let test = generator.split("test", config.test_count, &mut rng);

    let total = (config.train_count + config.dev_count + config.test_count).max(1) as f64;
    let ratios = SplitRatios {
        train: config.train_count as f64 / total,
        dev: config.dev_count as f64 / total,
        test: config.test_count as f64 / total,
    };
    Ok(DatasetSplit {
        train,
        dev,
        test,
        seed: config.seed,
        ratios,
    })
}

/// Built-in inventory: each phrase with contexts that force one reading.
pub fn default_inventory() -> Vec<PhraseEntry> {
    vec![
        PhraseEntry::new(
            "saw the light",
            &[
                "the skeptic finally {P} about the {w} plan",
                "after years of denial she {P} and changed her ways",
                "the stubborn critic {P} once the evidence arrived",
            ],
            &[
                "from the dark cave he {P} of the {w} lantern",
                "the sailor {P} flashing on the distant shore",
                "through the window they {P} of the morning sun",
            ],
        ),
        PhraseEntry::new(
            "spill the beans",
            &[
                "the witness refused to {P} about the {w} scheme",
                "sooner or later someone will {P} on the secret",
                "do not {P} before the surprise party",
            ],
            &[
                "careful with the pot or you will {P} on the stove",
                "the child tripped and managed to {P} across the {w} floor",
                "tilt the can slowly so you don't {P} into the sink",
            ],
        ),
        PhraseEntry::new(
            "break the ice",
            &[
                "the host told a joke to {P} with the nervous guests",
                "a friendly question can {P} at an awkward meeting",
                "she tried to {P} on the first day at the {w} office",
            ],
            &[
                "the fishermen used an axe to {P} on the frozen lake",
                "the heavy ship could {P} covering the northern harbor",
                "use a hammer to {P} in the {w} bucket",
            ],
        ),
        PhraseEntry::new(
            "hit the road",
            &[
                "it is getting late so we should {P} and go home",
                "after the concert the band decided to {P} for the tour",
                "pack your bags because tomorrow we {P} early",
            ],
            &[
                "the falling crate would {P} with a loud bang",
                "the hail began to {P} and bounce onto the {w} grass",
                "raindrops {P} in front of the old farmhouse",
            ],
        ),
        PhraseEntry::new(
            "under the weather",
            &[
                "he stayed home because he felt {P} all week",
                "the coach looked a bit {P} after the long flight",
                "she was {P} so the doctor prescribed rest",
            ],
            &[
                "the forecast channel showed a map {P} segment about {w}",
                "the article printed {P} report described a storm",
                "scroll to the section {P} headline on the {w} page",
            ],
        ),
        PhraseEntry::new(
            "cut corners",
            &[
                "the builder tried to {P} to save money on the {w} project",
                "good scientists never {P} when checking their data",
                "the company was fined because it chose to {P} on safety",
            ],
            &[
                "use sharp scissors to {P} off the paper square",
                "the tailor will {P} of the fabric before sewing",
                "carefully {P} from the cardboard to make a {w} box",
            ],
        ),
        PhraseEntry::new(
            "in hot water",
            &[
                "the senator found himself {P} after the scandal",
                "you will be {P} if the manager finds out",
                "the student landed {P} for copying the {w} essay",
            ],
            &[
                "soak the stained shirt {P} for an hour",
                "the chef dissolved the sugar {P} before baking",
                "wash the {w} dishes {P} with plenty of soap",
            ],
        ),
        PhraseEntry::new(
            "pull strings",
            &[
                "his uncle had to {P} to get him the {w} job",
                "she can {P} at city hall to speed up the permit",
                "rich donors often {P} behind the scenes",
            ],
            &[
                "the puppeteer will {P} to move the wooden doll",
                "the kitten likes to {P} from the {w} sweater",
                "musicians gently {P} to tune the old guitar",
            ],
        ),
        PhraseEntry::new(
            "turn the tables",
            &[
                "the underdog managed to {P} in the final round",
                "with one clever move the lawyer could {P} on the prosecution",
                "the rebels hoped to {P} against the {w} empire",
            ],
            &[
                "the movers had to {P} sideways to fit them through the door",
                "please {P} so the chairs face the {w} stage",
                "waiters {P} around before the banquet starts",
            ],
        ),
        PhraseEntry::new(
            "on thin ice",
            &[
                "after the last warning you are {P} with the boss",
                "the team is {P} after three straight losses",
                "the treaty left both nations {P} with the {w} allies",
            ],
            &[
                "the skaters stepped {P} near the edge of the pond",
                "a deer slipped {P} covering the {w} river",
                "never walk {P} in early spring",
            ],
        ),
    ]
}
