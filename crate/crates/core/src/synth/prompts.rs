//! Prompt templates with `[VAR]` placeholders.

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;

use super::{SynthError, VariableAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Filter,
    GenReceivers,
    GenTopics,
    GenConversation,
    Transform,
}

const FILTER: &str = "Determine whether the following topic is likely to be discussed by people on their mobile phones. Give a score of 0 or 1, where 1 means very likely, and 0 means unlikely.\n[TEXT]";
const RECEIVERS: &str = "Imagine you are a [GENDER] at age [AGE]. You are using the [CHAT-APP] APP to message someone on your mobile phone on the [TIME] of a [DAY]. Generate a list of potential message receivers.";
const TOPICS: &str = "Imagine you are a [GENDER] at age [AGE]. You are using the [CHAT-APP] APP to message [RECEIVER] on your mobile phone on the [TIME] of a [DAY]. Generate a list of potential message topics.";
const CONVERSATION: &str = "Imagine you are a [GENDER] at age [AGE]. You are using the [CHAT-APP] APP to message [RECEIVER] on your mobile phone on the [TIME] of a [DAY]. You want to chat about the following topic: [TOPIC]. Generate the conversation between you and your message receiver. Do not include information other than the conversation.";
const TRANSFORM: &str = "Convert the following article to a conversation that you may message over your mobile phone. Generate the conversation. Include as many details as possible.\n[TEXT]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub text: String,
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([A-Z][A-Z-]*)\]").expect("valid regex"))
}

impl PromptTemplate {
    pub fn builtin(kind: PromptKind) -> Self {
        let text = match kind {
            PromptKind::Filter => FILTER,
            PromptKind::GenReceivers => RECEIVERS,
            PromptKind::GenTopics => TOPICS,
            PromptKind::GenConversation => CONVERSATION,
            PromptKind::Transform => TRANSFORM,
        };
        PromptTemplate {
            kind,
            text: text.to_owned(),
        }
    }

    /// Placeholder names in order of appearance.
    pub fn placeholders(&self) -> Vec<String> {
        placeholder()
            .captures_iter(&self.text)
            .map(|c| c[1].to_owned())
            .collect()
    }

    /// Substitutes every placeholder in one pass over the template, so
    /// brackets inside bound values are left alone.
    pub fn render(&self, bindings: &BTreeMap<&str, &str>) -> Result<String, SynthError> {
        if let Some(missing) = self
            .placeholders()
            .into_iter()
            .find(|p| !bindings.contains_key(p.as_str()))
        {
            return Err(SynthError::MissingBinding(missing));
        }
        Ok(placeholder()
            .replace_all(&self.text, |c: &Captures| bindings[&c[1]].to_owned())
            .into_owned())
    }

    /// Binds the assignment's variables; unset RECEIVER/TOPIC stay unbound.
    pub fn render_assignment(&self, a: &VariableAssignment) -> Result<String, SynthError> {
        let mut b = BTreeMap::new();
        b.insert("AGE", a.age.as_str());
        b.insert("GENDER", a.gender.as_str());
        b.insert("TIME", a.time.as_str());
        b.insert("DAY", a.day.as_str());
        b.insert("CHAT-APP", a.chat_app.as_str());
        if let Some(r) = a.receiver() {
            b.insert("RECEIVER", r);
        }
        if let Some(t) = a.topic() {
            b.insert("TOPIC", t);
        }
        self.render(&b)
    }

    pub fn render_text(&self, text: &str) -> Result<String, SynthError> {
        self.render(&BTreeMap::from([("TEXT", text)]))
    }
}
