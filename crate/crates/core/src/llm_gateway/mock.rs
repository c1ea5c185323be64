//! Scripted chat client for tests and offline runs.
//!
//! Each call scans the unconsumed entries in script order and takes the first
//! whose matcher accepts it. A consumed entry is never reused. Sequence-index
//! matchers assume calls arrive one at a time.

use std::sync::Mutex;

use super::{ChatClient, ChatReply, ChatRequest, TransportError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    /// Accepts any call.
    Next,
    /// Accepts only the call with this zero-based sequence index.
    Index(usize),
    /// Accepts a call whose rendered message text contains the substring.
    Contains(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Reply(String),
    /// Injected transient transport failure.
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEntry {
    pub matcher: Matcher,
    pub outcome: Outcome,
}

impl ScriptEntry {
    pub fn reply(text: impl Into<String>) -> Self {
        Self {
            matcher: Matcher::Next,
            outcome: Outcome::Reply(text.into()),
        }
    }

    pub fn fail(message: impl Into<String>) -> Self {
        Self {
            matcher: Matcher::Next,
            outcome: Outcome::Fail(message.into()),
        }
    }

    pub fn when(mut self, matcher: Matcher) -> Self {
        self.matcher = matcher;
        self
    }
}

#[derive(Debug)]
struct State {
    entries: Vec<Option<ScriptEntry>>,
    calls: usize,
}

#[derive(Debug)]
pub struct ScriptedMock {
    state: Mutex<State>,
}

impl ScriptedMock {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            state: Mutex::new(State {
                entries: entries.into_iter().map(Some).collect(),
                calls: 0,
            }),
        }
    }

    pub fn replies<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(texts.into_iter().map(ScriptEntry::reply).collect())
    }

    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("mock state poisoned");
        state.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("mock state poisoned").calls
    }
}

fn request_text(request: &ChatRequest) -> String {
    request
        .messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

impl ChatClient for ScriptedMock {
    fn send(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let mut state = self.state.lock().expect("mock state poisoned");
        let call = state.calls;
        state.calls += 1;
        if state.entries.iter().all(Option::is_none) {
            return Err(TransportError::ScriptExhausted { call });
        }
        let text = request_text(request);
        let slot = state.entries.iter().position(|entry| match entry {
            Some(ScriptEntry { matcher, .. }) => match matcher {
                Matcher::Next => true,
                Matcher::Index(i) => *i == call,
                Matcher::Contains(needle) => text.contains(needle.as_str()),
            },
            None => false,
        });
        let Some(slot) = slot else {
            return Err(TransportError::NoMatch { call });
        };
        let entry = state.entries[slot].take().expect("slot checked above");
        match entry.outcome {
            Outcome::Reply(text) => Ok(ChatReply { text, usage: None }),
            Outcome::Fail(message) => Err(TransportError::Transient(message)),
        }
    }

    fn model_name(&self) -> String {
        "scripted-mock".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{DecodingParams, Message, Role};

    fn req(text: &str) -> ChatRequest {
        ChatRequest {
            messages: vec![Message::new(Role::User, text)],
            params: DecodingParams::default(),
        }
    }

    #[test]
    fn replies_in_order_then_exhausts() {
        let mock = ScriptedMock::replies(["a", "b"]);
        assert_eq!(mock.send(&req("x")).unwrap().text, "a");
        assert_eq!(mock.send(&req("x")).unwrap().text, "b");
        assert_eq!(
            mock.send(&req("x")).unwrap_err(),
            TransportError::ScriptExhausted { call: 2 }
        );
    }

    #[test]
    fn substring_and_index_matchers() {
        let mock = ScriptedMock::new(vec![
            ScriptEntry::reply("keywords").when(Matcher::Contains("KEYWORDS".into())),
            ScriptEntry::reply("second").when(Matcher::Index(1)),
            ScriptEntry::reply("proof").when(Matcher::Contains("PROOF".into())),
        ]);
        assert_eq!(mock.send(&req("PROOF please")).unwrap().text, "proof");
        assert_eq!(mock.send(&req("anything")).unwrap().text, "second");
        assert_eq!(
            mock.send(&req("no match")).unwrap_err(),
            TransportError::NoMatch { call: 2 }
        );
        assert_eq!(mock.send(&req("KEYWORDS")).unwrap().text, "keywords");
        assert_eq!(mock.remaining(), 0);
    }
}
