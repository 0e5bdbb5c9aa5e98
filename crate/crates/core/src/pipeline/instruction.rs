//! Edit instructions: three fixed grammars, rendered and parsed losslessly.
//!
//! ```text
//! Add <element> to <location>
//! Remove <target>
//! Replace <original> with <replacement>
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstructionError {
    #[error("unknown edit action `{0}`")]
    UnknownAction(String),
    #[error("missing slot `{0}`")]
    MissingSlot(&'static str),
    #[error("slot `{0}` is empty")]
    EmptySlot(&'static str),
    #[error("slot `{0}` contains a line break")]
    MultilineSlot(&'static str),
    #[error("slot `{slot}` would make the rendered instruction parse differently")]
    AmbiguousSlot { slot: &'static str },
    #[error("`{0}` does not match any instruction grammar")]
    Unparseable(String),
    #[error("rendered text `{rendered}` does not match its slots")]
    RenderedMismatch { rendered: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditAction {
    Add,
    Remove,
    Replace,
}

impl EditAction {
    pub const ALL: [EditAction; 3] = [EditAction::Add, EditAction::Remove, EditAction::Replace];

    pub fn as_str(self) -> &'static str {
        match self {
            EditAction::Add => "add",
            EditAction::Remove => "remove",
            EditAction::Replace => "replace",
        }
    }

    /// Slot names in rendering order.
    pub fn slot_names(self) -> &'static [&'static str] {
        match self {
            EditAction::Add => &["element", "location"],
            EditAction::Remove => &["target"],
            EditAction::Replace => &["original", "replacement"],
        }
    }

    /// Prompt handed to an instruction-generating vision-language model.
    pub fn prompt_template(self) -> &'static str {
        match self {
            EditAction::Add => ADD_PROMPT,
            EditAction::Remove => REMOVE_PROMPT,
            EditAction::Replace => REPLACE_PROMPT,
        }
    }
}

impl fmt::Display for EditAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EditAction {
    type Err = InstructionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "add" => Ok(EditAction::Add),
            "remove" => Ok(EditAction::Remove),
            "replace" => Ok(EditAction::Replace),
            _ => Err(InstructionError::UnknownAction(s.to_string())),
        }
    }
}

const REPLACE_PROMPT: &str = "\
Given an image, generate a short \"replace\" type editing instruction in the format:
Replace [original object/part/pattern] with [new element]

Additional Requirements:
The [original object/part/pattern] must already exist in the image.
It can be an entire object, a part of an object, a geometric shape, or a pattern.
The [new element] should clearly differ from the original and fit naturally into the image.
It can be another object, a different part, a new shape, text, or a new pattern.
Avoid replacing with intangible elements (e.g., gases, smoke, light, shadow).
Do not change colors: replacements must not involve altering the color of any existing element.

General Rules:
Keep the instruction short and clear.
No extra explanation or description.
";

const REMOVE_PROMPT: &str = "\
Given an image, generate a short \"remove\" type editing instruction in the format:
Remove [object/part]

Additional Requirements:
The [object/part] must already exist in the image.
It can be the whole object or a specific part of an object (e.g., handle of a cup, branch of a tree).
The removal should be visually noticeable and affect the composition of the image.
Avoid removing intangible elements (e.g., light, shadow, gases, smoke).

General Rules:
Keep the instruction short and clear.
No extra explanation or description.
";

const ADD_PROMPT: &str = "\
Given an image, generate a short \"add\" type editing instruction in the format:
Add [element] to [location]

Additional Requirements:
The [location] can be:
an existing object in the image,
a position within the image (e.g., top left, bottom center),
or a specific part/position of an object (e.g., handle of a cup, roof of a house).
The [element] should blend naturally into the image and not appear abrupt.
It can be an object, text, pattern, or other visual addition.
Avoid adding gases, smoke, or other intangible elements.

General Rules:
Keep the instruction short and clear.
No extra explanation or description.
";

/// A validated instruction. Slots are stored trimmed, in the action's slot
/// order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInstruction", into = "RawInstruction")]
pub struct EditInstruction {
    action: EditAction,
    slots: Vec<String>,
    rendered: String,
}

#[derive(Serialize, Deserialize)]
struct RawInstruction {
    action: EditAction,
    slots: Vec<String>,
    rendered: String,
}

impl TryFrom<RawInstruction> for EditInstruction {
    type Error = InstructionError;

    fn try_from(raw: RawInstruction) -> Result<Self, Self::Error> {
        let names = raw.action.slot_names();
        let pairs: Vec<(&str, &str)> = names
            .iter()
            .zip(&raw.slots)
            .map(|(n, v)| (*n, v.as_str()))
            .collect();
        if raw.slots.len() > names.len() {
            return Err(InstructionError::RenderedMismatch { rendered: raw.rendered });
        }
        let built = render_instruction(raw.action, &pairs)?;
        if built.rendered != raw.rendered || built.slots != raw.slots {
            return Err(InstructionError::RenderedMismatch { rendered: raw.rendered });
        }
        Ok(built)
    }
}

impl From<EditInstruction> for RawInstruction {
    fn from(i: EditInstruction) -> Self {
        RawInstruction { action: i.action, slots: i.slots, rendered: i.rendered }
    }
}

impl EditInstruction {
    pub fn action(&self) -> EditAction {
        self.action
    }

    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&str> {
        let i = self.action.slot_names().iter().position(|n| *n == name)?;
        Some(&self.slots[i])
    }

    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    pub fn add(element: &str, location: &str) -> Result<Self, InstructionError> {
        render_instruction(EditAction::Add, &[("element", element), ("location", location)])
    }

    pub fn remove(target: &str) -> Result<Self, InstructionError> {
        render_instruction(EditAction::Remove, &[("target", target)])
    }

    pub fn replace(original: &str, replacement: &str) -> Result<Self, InstructionError> {
        render_instruction(
            EditAction::Replace,
            &[("original", original), ("replacement", replacement)],
        )
    }
}

impl fmt::Display for EditInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rendered)
    }
}

impl FromStr for EditInstruction {
    type Err = InstructionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_instruction(s)
    }
}

fn format(action: EditAction, slots: &[String]) -> String {
    match action {
        EditAction::Add => format!("Add {} to {}", slots[0], slots[1]),
        EditAction::Remove => format!("Remove {}", slots[0]),
        EditAction::Replace => format!("Replace {} with {}", slots[0], slots[1]),
    }
}

/// Builds an instruction from named slots. Values are trimmed. A slot whose
/// text would shift the keyword split on re-parsing (for instance an Add
/// element containing " to ") is rejected, so `parse(render(x)) == x` always.
pub fn render_instruction(
    action: EditAction,
    slots: &[(&str, &str)],
) -> Result<EditInstruction, InstructionError> {
    let mut values = Vec::with_capacity(2);
    for &name in action.slot_names() {
        let value = slots
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v.trim())
            .ok_or(InstructionError::MissingSlot(name))?;
        if value.is_empty() {
            return Err(InstructionError::EmptySlot(name));
        }
        if value.contains(['\n', '\r']) {
            return Err(InstructionError::MultilineSlot(name));
        }
        values.push(value.to_string());
    }
    let rendered = format(action, &values);
    let reparsed = split(&rendered).ok_or(InstructionError::AmbiguousSlot { slot: action.slot_names()[0] })?;
    if reparsed.0 != action || reparsed.1 != values {
        return Err(InstructionError::AmbiguousSlot { slot: action.slot_names()[0] });
    }
    Ok(EditInstruction { action, slots: values, rendered })
}

/// Like [`render_instruction`] with the action given by name.
pub fn render_named(action: &str, slots: &[(&str, &str)]) -> Result<EditInstruction, InstructionError> {
    render_instruction(action.parse()?, slots)
}

fn split(text: &str) -> Option<(EditAction, Vec<String>)> {
    let two = |rest: &str, keyword: &str| {
        let (a, b) = rest.split_once(keyword)?;
        Some(vec![a.trim().to_string(), b.trim().to_string()])
    };
    if let Some(rest) = text.strip_prefix("Add ") {
        return Some((EditAction::Add, two(rest, " to ")?));
    }
    if let Some(rest) = text.strip_prefix("Replace ") {
        return Some((EditAction::Replace, two(rest, " with ")?));
    }
    if let Some(rest) = text.strip_prefix("Remove ") {
        return Some((EditAction::Remove, vec![rest.trim().to_string()]));
    }
    None
}

/// Parses a rendered instruction. Leading and trailing whitespace is ignored;
/// the keyword split uses the first occurrence of " to " or " with ".
pub fn parse_instruction(text: &str) -> Result<EditInstruction, InstructionError> {
    let text = text.trim();
    let (action, values) = split(text).ok_or_else(|| InstructionError::Unparseable(text.to_string()))?;
    let pairs: Vec<(&str, &str)> = action
        .slot_names()
        .iter()
        .zip(&values)
        .map(|(n, v)| (*n, v.as_str()))
        .collect();
    render_instruction(action, &pairs)
}
