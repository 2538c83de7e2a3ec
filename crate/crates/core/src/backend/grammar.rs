//! Template grammar behind the mock backend and the private-data simulator.
//!
//! Two registers share one set of function words: a chat register (short
//! first/second-person turns) and a web register (longer third-person
//! prose). Content slots draw from per-register word pools with Zipf-like
//! weights; `vocab_skew` makes the web register borrow chat content words.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    ChatLike,
    WebLike,
}

impl Style {
    pub fn as_str(self) -> &'static str {
        match self {
            Style::ChatLike => "chat_like",
            Style::WebLike => "web_like",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Noun,
    Verb,
    Adj,
    Time,
    Name,
    Number,
    Interj,
}

/// How a categorical slot is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WordDraw {
    /// Draw proportionally to the pool's Zipf weights (simulated users).
    Natural,
    /// Perturb log-weights with Gaussian `jitter`, keep the `top_k` best,
    /// then sample the softmax at `temperature` (0 = argmax).
    Llm {
        top_k: usize,
        temperature: f64,
        jitter: f64,
    },
}

pub(crate) struct Pools {
    nouns: &'static [&'static str],
    verbs: &'static [[&'static str; 4]],
    adjs: &'static [&'static str],
    times: &'static [&'static str],
    names: &'static [&'static str],
    numbers: &'static [&'static str],
    interjs: &'static [&'static str],
}

impl Pools {
    fn len(&self, kind: PoolKind) -> usize {
        match kind {
            PoolKind::Noun => self.nouns.len(),
            PoolKind::Verb => self.verbs.len(),
            PoolKind::Adj => self.adjs.len(),
            PoolKind::Time => self.times.len(),
            PoolKind::Name => self.names.len(),
            PoolKind::Number => self.numbers.len(),
            PoolKind::Interj => self.interjs.len(),
        }
    }

    pub(crate) fn all_words(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        out.extend(self.nouns);
        out.extend(self.verbs.iter().flatten());
        out.extend(self.adjs);
        out.extend(self.times);
        out.extend(self.names);
        out.extend(self.numbers);
        out.extend(self.interjs);
        out
    }
}

pub const FUNCTION_WORDS: &[&str] = &[
    "i", "you", "we", "they", "he", "she", "it", "me", "us", "them", "my", "your", "our", "their",
    "his", "her", "its", "the", "a", "an", "this", "that", "these", "those", "to", "of", "in",
    "on", "at", "for", "with", "from", "by", "about", "and", "or", "but", "so", "if", "as", "is",
    "are", "was", "were", "be", "been", "have", "has", "had", "do", "did", "will", "would", "can",
    "could", "should", "not", "just", "all", "some", "more", "very", "what", "how", "when",
    "where", "who", "there", "here", "up", "out", "also", "than", "then", "which", "too",
    "really", "much", "no", "yes", "can't", "don't", "i'm", "it's", "that's", "let's", "you're",
    "we're", "i'll",
];

pub(crate) static CHAT: Pools = Pools {
    nouns: &[
        "pizza", "movie", "party", "beach", "game", "dinner", "phone", "dog", "puppy", "kitty",
        "car", "room", "school", "class", "homework", "concert", "show", "song", "trip",
        "vacation", "pic", "video", "birthday", "gift", "cake", "coffee", "lunch", "breakfast",
        "weekend", "mall", "gym", "workout", "date", "snacks", "tacos", "burgers", "playlist",
        "episode", "series", "team", "match", "festival", "sleepover", "bestie", "crush",
        "outfit", "shoes", "haircut", "nap", "beer",
    ],
    verbs: &[
        ["see", "saw", "seeing", "sees"],
        ["watch", "watched", "watching", "watches"],
        ["eat", "ate", "eating", "eats"],
        ["grab", "grabbed", "grabbing", "grabs"],
        ["love", "loved", "loving", "loves"],
        ["text", "texted", "texting", "texts"],
        ["call", "called", "calling", "calls"],
        ["bring", "brought", "bringing", "brings"],
        ["get", "got", "getting", "gets"],
        ["try", "tried", "trying", "tries"],
        ["play", "played", "playing", "plays"],
        ["miss", "missed", "missing", "misses"],
        ["buy", "bought", "buying", "buys"],
        ["cook", "cooked", "cooking", "cooks"],
        ["join", "joined", "joining", "joins"],
        ["pick", "picked", "picking", "picks"],
        ["send", "sent", "sending", "sends"],
        ["wear", "wore", "wearing", "wears"],
        ["sing", "sang", "singing", "sings"],
        ["dance", "danced", "dancing", "dances"],
        ["drive", "drove", "driving", "drives"],
        ["forget", "forgot", "forgetting", "forgets"],
        ["finish", "finished", "finishing", "finishes"],
        ["chill", "chilled", "chilling", "chills"],
        ["binge", "binged", "bingeing", "binges"],
        ["meet", "met", "meeting", "meets"],
        ["hug", "hugged", "hugging", "hugs"],
        ["order", "ordered", "ordering", "orders"],
        ["post", "posted", "posting", "posts"],
        ["share", "shared", "sharing", "shares"],
        ["catch", "caught", "catching", "catches"],
        ["swim", "swam", "swimming", "swims"],
        ["sleep", "slept", "sleeping", "sleeps"],
        ["like", "liked", "liking", "likes"],
        ["need", "needed", "needing", "needs"],
        ["bake", "baked", "baking", "bakes"],
    ],
    adjs: &[
        "awesome", "cute", "funny", "amazing", "crazy", "cool", "sweet", "tired", "excited",
        "hungry", "bored", "happy", "sad", "super", "fun", "weird", "yummy", "lit", "hyped",
        "busy", "late", "ready", "sorry", "sick", "nervous", "gorgeous", "adorable", "silly",
        "epic", "lucky",
    ],
    times: &[
        "tonight", "today", "tomorrow", "later", "now", "soon", "rn", "asap", "yesterday",
        "again", "tmrw", "lately", "anymore", "someday", "sometime",
    ],
    names: &[
        "mom", "dad", "sis", "bro", "babe", "dude", "girl", "grandma", "grandpa", "auntie",
        "buddy", "hun", "sweetie", "guys", "fam", "jake", "emma", "olivia", "liam", "noah",
    ],
    numbers: &["2", "5", "10", "20", "30", "7", "8", "3", "4", "6"],
    interjs: &[
        "lol", "omg", "haha", "yay", "ugh", "wow", "yeah", "ok", "hey", "aww", "hmm", "yep",
    ],
};

pub(crate) static WEB: Pools = Pools {
    nouns: &[
        "system", "report", "company", "market", "policy", "research", "product", "service",
        "industry", "government", "development", "program", "data", "analysis", "management",
        "region", "community", "council", "project", "university", "process", "technology",
        "equipment", "customer", "network", "property", "treatment", "quality", "performance",
        "application", "county", "department", "article", "review", "engine", "material",
        "solution", "facility", "standard", "strategy", "investment", "economy", "agency",
        "committee", "legislation", "infrastructure", "patient", "manufacturer", "component",
        "revenue",
    ],
    verbs: &[
        ["provide", "provided", "providing", "provides"],
        ["develop", "developed", "developing", "develops"],
        ["require", "required", "requiring", "requires"],
        ["include", "included", "including", "includes"],
        ["increase", "increased", "increasing", "increases"],
        ["support", "supported", "supporting", "supports"],
        ["establish", "established", "establishing", "establishes"],
        ["announce", "announced", "announcing", "announces"],
        ["publish", "published", "publishing", "publishes"],
        ["operate", "operated", "operating", "operates"],
        ["implement", "implemented", "implementing", "implements"],
        ["reduce", "reduced", "reducing", "reduces"],
        ["improve", "improved", "improving", "improves"],
        ["maintain", "maintained", "maintaining", "maintains"],
        ["produce", "produced", "producing", "produces"],
        ["describe", "described", "describing", "describes"],
        ["determine", "determined", "determining", "determines"],
        ["consider", "considered", "considering", "considers"],
        ["identify", "identified", "identifying", "identifies"],
        ["achieve", "achieved", "achieving", "achieves"],
        ["obtain", "obtained", "obtaining", "obtains"],
        ["evaluate", "evaluated", "evaluating", "evaluates"],
        ["examine", "examined", "examining", "examines"],
        ["contain", "contained", "containing", "contains"],
        ["represent", "represented", "representing", "represents"],
        ["promote", "promoted", "promoting", "promotes"],
        ["acquire", "acquired", "acquiring", "acquires"],
        ["deliver", "delivered", "delivering", "delivers"],
        ["design", "designed", "designing", "designs"],
        ["expand", "expanded", "expanding", "expands"],
        ["generate", "generated", "generating", "generates"],
        ["install", "installed", "installing", "installs"],
        ["measure", "measured", "measuring", "measures"],
        ["negotiate", "negotiated", "negotiating", "negotiates"],
        ["regulate", "regulated", "regulating", "regulates"],
        ["approve", "approved", "approving", "approves"],
    ],
    adjs: &[
        "significant", "economic", "financial", "public", "national", "regional", "available",
        "additional", "specific", "technical", "professional", "environmental", "annual",
        "current", "previous", "federal", "commercial", "industrial", "effective", "potential",
        "substantial", "appropriate", "comprehensive", "primary", "essential", "various",
        "local", "global", "digital", "strategic",
    ],
    times: &[
        "annually", "previously", "currently", "recently", "subsequently", "historically",
        "initially", "typically", "eventually", "formerly", "thereafter", "presently",
        "quarterly", "ultimately", "meanwhile",
    ],
    names: &[
        "smith", "johnson", "williams", "brown", "jones", "miller", "davis", "wilson",
        "anderson", "taylor", "thomas", "moore", "martin", "jackson", "thompson", "white",
        "harris", "clark", "lewis", "robinson",
    ],
    numbers: &["2012", "2019", "100", "500", "1000", "50", "15", "25", "40", "90"],
    interjs: &[
        "however", "moreover", "furthermore", "additionally", "therefore", "consequently",
        "nevertheless", "accordingly", "indeed", "likewise", "overall", "notably",
    ],
};

/// Possible message receivers, with the possessive the prompt expects.
pub const RECEIVERS: &[&str] = &[
    "your mom", "your dad", "your best friend", "your sister", "your brother", "your boss",
    "your coworker", "your roommate", "your boyfriend", "your girlfriend", "your family",
    "your teacher", "your neighbor", "your grandma", "your coach", "your classmate",
];

const CHAT_TEMPLATES: &[&str] = &[
    "i {past} the {noun} {time} .",
    "did you {verb} the {noun} ?",
    "{interj} that's so {adj} !",
    "i can't {verb} the {noun} with you {time} !",
    "are you {ing} the {noun} {time} ?",
    "i'm so {adj} about the {noun} .",
    "we should {verb} a {noun} {time} .",
    "{interj} {name} !",
    "{interj} i {past} my {noun} !",
    "can you {verb} me the {noun} {time} ?",
    "that {noun} was {adj} {interj}",
    "i just {past} the {adj} {noun} .",
    "let's {verb} the {noun} {time} .",
    "you are so {adj} {name} !",
    "i {past} {number} {noun} {time} .",
];

const WEB_TEMPLATES: &[&str] = &[
    "the {noun} {verb3} the {adj} {noun} of the {noun} .",
    "{name} {past} that the {noun} was {adj} .",
    "in {number} , the {noun} {past} {number} {noun} for the {adj} {noun} .",
    "{interj} , the {adj} {noun} {verb3} a {adj} {noun} .",
    "the {noun} is {time} {ing} the {noun} in the {noun} .",
    "this {noun} will {verb} the {adj} {noun} by {number} .",
    "{name} and {name} {past} the {noun} of the {adj} {noun} .",
    "it is {adj} to {verb} the {noun} for the {noun} .",
    "the {adj} {noun} {past} {time} as the {noun} {verb3} the {noun} .",
    "all {adj} {noun} should {verb} the {noun} .",
];

const TOPIC_TEMPLATES: &[&str] = &[
    "{ing} the {noun} {time}",
    "the {adj} {noun}",
    "i {past} the {noun}",
    "we should {verb} the {noun}",
    "are you {ing} the {noun} {time}",
];

/// Index in `0..n` drawn under `mode` with weights `1 / (r + 1)`.
pub fn draw_index(rng: &mut ChaCha8Rng, n: usize, mode: WordDraw) -> usize {
    debug_assert!(n > 0);
    match mode {
        WordDraw::Natural => {
            let total: f64 = (0..n).map(|r| 1.0 / (r as f64 + 1.0)).sum();
            let mut u = rng.random::<f64>() * total;
            for r in 0..n {
                u -= 1.0 / (r as f64 + 1.0);
                if u < 0.0 {
                    return r;
                }
            }
            n - 1
        }
        WordDraw::Llm {
            top_k,
            temperature,
            jitter,
        } => {
            let mut logits: Vec<(usize, f64)> = (0..n)
                .map(|r| {
                    let z: f64 = StandardNormal.sample(rng);
                    (r, -(r as f64 + 1.0).ln() + jitter * z)
                })
                .collect();
            logits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            logits.truncate(top_k.max(1));
            if temperature == 0.0 {
                return logits[0].0;
            }
            let top = logits[0].1;
            let weights: Vec<f64> = logits
                .iter()
                .map(|&(_, l)| ((l - top) / temperature).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (&(r, _), w) in logits.iter().zip(&weights) {
                u -= w;
                if u < 0.0 {
                    return r;
                }
            }
            logits[logits.len() - 1].0
        }
    }
}

/// Fills templates for one register.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grammar {
    pub style: Style,
    pub vocab_skew: f64,
}

impl Grammar {
    pub fn new(style: Style, vocab_skew: f64) -> Self {
        Grammar {
            style,
            vocab_skew: vocab_skew.clamp(0.0, 1.0),
        }
    }

    /// Pool set for the next content slot. The chat register always uses
    /// chat pools; the web register borrows them with probability
    /// `vocab_skew`.
    fn pools(&self, rng: &mut ChaCha8Rng) -> &'static Pools {
        match self.style {
            Style::ChatLike => &CHAT,
            Style::WebLike => {
                if self.vocab_skew > 0.0 && rng.random::<f64>() < self.vocab_skew {
                    &CHAT
                } else {
                    &WEB
                }
            }
        }
    }

    fn word(&self, rng: &mut ChaCha8Rng, mode: WordDraw, slot: &str) -> Option<&'static str> {
        let (kind, form) = match slot {
            "noun" => (PoolKind::Noun, 0),
            "verb" => (PoolKind::Verb, 0),
            "past" => (PoolKind::Verb, 1),
            "ing" => (PoolKind::Verb, 2),
            "verb3" => (PoolKind::Verb, 3),
            "adj" => (PoolKind::Adj, 0),
            "time" => (PoolKind::Time, 0),
            "name" => (PoolKind::Name, 0),
            "number" => (PoolKind::Number, 0),
            "interj" => (PoolKind::Interj, 0),
            _ => return None,
        };
        let pools = self.pools(rng);
        let i = draw_index(rng, pools.len(kind), mode);
        Some(match kind {
            PoolKind::Noun => pools.nouns[i],
            PoolKind::Verb => pools.verbs[i][form],
            PoolKind::Adj => pools.adjs[i],
            PoolKind::Time => pools.times[i],
            PoolKind::Name => pools.names[i],
            PoolKind::Number => pools.numbers[i],
            PoolKind::Interj => pools.interjs[i],
        })
    }

    fn fill(&self, rng: &mut ChaCha8Rng, mode: WordDraw, template: &str) -> Vec<&'static str> {
        template
            .split(' ')
            .map(|tok| {
                tok.strip_prefix('{')
                    .and_then(|t| t.strip_suffix('}'))
                    .and_then(|slot| self.word(rng, mode, slot))
                    .unwrap_or_else(|| intern(tok))
            })
            .collect()
    }

    fn pick<'t>(rng: &mut ChaCha8Rng, mode: WordDraw, templates: &'t [&'t str]) -> &'t str {
        templates[draw_index(rng, templates.len(), mode)]
    }

    /// One sentence in this grammar's own register.
    pub fn sentence(&self, rng: &mut ChaCha8Rng, mode: WordDraw) -> String {
        let templates = match self.style {
            Style::ChatLike => CHAT_TEMPLATES,
            Style::WebLike => WEB_TEMPLATES,
        };
        let t = Self::pick(rng, mode, templates);
        render(&self.fill(rng, mode, t))
    }

    /// A short chat-register message topic.
    pub fn topic(&self, rng: &mut ChaCha8Rng, mode: WordDraw) -> String {
        let t = Self::pick(rng, mode, TOPIC_TEMPLATES);
        render(&self.fill(rng, mode, t))
    }

    /// A chat-register reaction line (used when turning articles into chats).
    pub fn chat_sentence(&self, rng: &mut ChaCha8Rng, mode: WordDraw) -> String {
        let t = Self::pick(rng, mode, CHAT_TEMPLATES);
        render(&self.fill(rng, mode, t))
    }

    /// A prose paragraph of `sentences` sentences.
    pub fn paragraph(&self, rng: &mut ChaCha8Rng, mode: WordDraw, sentences: usize) -> String {
        (0..sentences.max(1))
            .map(|_| self.sentence(rng, mode))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// A multi-turn conversation in the `**Label:**` format, alternating
    /// between `me` and `other`, opening on `topic` when given.
    pub fn conversation(
        &self,
        rng: &mut ChaCha8Rng,
        mode: WordDraw,
        me: &str,
        other: &str,
        topic: Option<&str>,
        turns: usize,
    ) -> String {
        let mut lines = Vec::with_capacity(turns);
        for t in 0..turns.max(2) {
            let speaker = if t % 2 == 0 { me } else { other };
            let mut text = if t == 0 {
                match topic {
                    Some(topic) => format!("{} {}", self.sentence(rng, mode), capitalize(topic.trim_end_matches('.'))) + ".",
                    None => self.sentence(rng, mode),
                }
            } else {
                self.sentence(rng, mode)
            };
            if rng.random::<f64>() < 0.3 {
                text.push(' ');
                text.push_str(&self.sentence(rng, mode));
            }
            lines.push(format!("**{speaker}:** {text}"));
        }
        lines.join("\n")
    }
}

fn intern(tok: &str) -> &'static str {
    FUNCTION_WORDS
        .iter()
        .chain([".", ",", "!", "?"].iter())
        .find(|w| **w == tok)
        .copied()
        .unwrap_or_else(|| panic!("template literal {tok:?} is not a function word"))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Joins tokens with spaces, glues punctuation to the previous word and
/// capitalizes the first letter.
fn render(tokens: &[&str]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let punct = matches!(*tok, "." | "," | "!" | "?");
        if !out.is_empty() && !punct {
            out.push(' ');
        }
        out.push_str(tok);
    }
    capitalize(&out)
}

/// Words that only the chat register produces (content pools and receiver
/// names), used by the mock filter to judge how chat-like a text is.
pub(crate) fn chat_content_words() -> Vec<&'static str> {
    let mut out = CHAT.all_words();
    out.extend(RECEIVERS.iter().flat_map(|r| r.split(' ')).filter(|w| *w != "your"));
    out
}

pub(crate) fn chat_nouns() -> &'static [&'static str] {
    CHAT.nouns
}

pub(crate) fn web_content_words() -> Vec<&'static str> {
    WEB.all_words()
}
