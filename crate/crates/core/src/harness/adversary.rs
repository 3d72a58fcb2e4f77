//! On-path adversary. It sees and controls wire bytes only: it can record,
//! replay, edit and drop frames, and swap the device at the terminal. It
//! never reads any party's keys.

use crate::codec::{self, MessageKind};
use crate::types::Hop;

/// Flip bits of one byte of a frame: `frame[offset] ^= xor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteEdit {
    pub offset: usize,
    pub xor: u8,
}

impl ByteEdit {
    pub fn flip_bit(bit: usize) -> Self {
        Self {
            offset: bit / 8,
            xor: 0x80 >> (bit % 8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Passthrough,
    /// Deliver, and keep a copy for later replay.
    Record,
    /// Deliver the frame recorded at this index instead.
    Replay(usize),
    Tamper(Vec<ByteEdit>),
    Drop,
    /// Put this device at the terminal, then deliver.
    SubstituteParty(usize),
}

impl Action {
    pub fn label(&self) -> Option<&'static str> {
        match self {
            Action::Passthrough => None,
            Action::Record => Some("record"),
            Action::Replay(_) => Some("replay"),
            Action::Tamper(_) => Some("tamper"),
            Action::Drop => Some("drop"),
            Action::SubstituteParty(_) => Some("substitute-party"),
        }
    }
}

/// Which frames a hook applies to. Unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matcher {
    pub hop: Option<Hop>,
    pub kind: Option<MessageKind>,
}

impl Matcher {
    pub fn on(hop: Hop, kind: MessageKind) -> Self {
        Self {
            hop: Some(hop),
            kind: Some(kind),
        }
    }

    pub fn matches(&self, hop: Hop, bytes: &[u8]) -> bool {
        self.hop.is_none_or(|h| h == hop)
            && self.kind.is_none_or(|k| {
                bytes
                    .first()
                    .and_then(|t| MessageKind::from_tag(*t))
                    .is_some_and(|actual| actual == k)
            })
    }
}

#[derive(Debug, Clone)]
pub struct Hook {
    pub matcher: Matcher,
    pub action: Action,
    /// Remove the hook after its first match.
    pub once: bool,
}

impl Hook {
    pub fn once(matcher: Matcher, action: Action) -> Self {
        Self {
            matcher,
            action,
            once: true,
        }
    }

    pub fn always(matcher: Matcher, action: Action) -> Self {
        Self {
            matcher,
            action,
            once: false,
        }
    }
}

/// A frame as seen on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observed {
    pub hop: Hop,
    pub channel: u64,
    pub bytes: Vec<u8>,
}

impl Observed {
    pub fn message(&self) -> Option<codec::Message> {
        codec::decode(&self.bytes).ok()
    }
}

#[derive(Debug, Default)]
pub struct Adversary {
    hooks: Vec<Hook>,
    recorded: Vec<Observed>,
    observed: Vec<Observed>,
}

impl Adversary {
    pub fn add_hook(&mut self, hook: Hook) {
        self.hooks.push(hook);
    }

    pub fn clear_hooks(&mut self) {
        self.hooks.clear();
    }

    /// Every frame that crossed a link, in order.
    pub fn observed(&self) -> &[Observed] {
        &self.observed
    }

    /// Frames kept by `Record` hooks.
    pub fn recorded(&self) -> &[Observed] {
        &self.recorded
    }

    pub fn last_observed(&self, hop: Hop, kind: MessageKind) -> Option<&Observed> {
        self.observed
            .iter()
            .rev()
            .find(|o| Matcher::on(hop, kind).matches(o.hop, &o.bytes))
    }

    pub(crate) fn observe(&mut self, frame: Observed) {
        self.observed.push(frame);
    }

    /// Applies the first matching hook, returning the action taken and the
    /// bytes to put on the wire.
    pub(crate) fn intercept(&mut self, hop: Hop, channel: u64, bytes: Vec<u8>) -> (Action, Vec<u8>) {
        let Some(i) = self.hooks.iter().position(|h| h.matcher.matches(hop, &bytes)) else {
            return (Action::Passthrough, bytes);
        };
        let action = self.hooks[i].action.clone();
        if self.hooks[i].once {
            self.hooks.remove(i);
        }
        let bytes = match &action {
            Action::Record => {
                self.recorded.push(Observed {
                    hop,
                    channel,
                    bytes: bytes.clone(),
                });
                bytes
            }
            Action::Replay(idx) => self.recorded.get(*idx).map_or(bytes, |o| o.bytes.clone()),
            Action::Tamper(edits) => {
                let mut b = bytes;
                for e in edits {
                    if let Some(byte) = b.get_mut(e.offset) {
                        *byte ^= e.xor;
                    }
                }
                b
            }
            Action::Passthrough | Action::Drop | Action::SubstituteParty(_) => bytes,
        };
        (action, bytes)
    }
}
