//! Role prompts for each model call and the output-format instructions that
//! go with each response schema.

use super::ResponseSchema;

pub const TEXT_ANALYST: &str = "You are the text analyst of a multimodal sentiment pipeline. \
Rate the sentiment polarity of the given text segment from -1 (extremely negative) to 1 \
(extremely positive), taking idioms, sarcasm and context into account.";

pub const IMAGE_ANALYST: &str = "You are the image analyst of a multimodal sentiment pipeline. \
Rate the sentiment conveyed by the image from -1 (extremely negative) to 1 (extremely positive) \
using scene, colour, gesture and expression cues, and describe the emotional cues you see.";

pub const FUSION_INSPECTOR: &str = "You are the fusion inspector of a multimodal sentiment \
pipeline. Given the text and visual analyses of one post, produce a single multimodal sentiment \
score from -1 to 1 and explain how the modalities agree or conflict.";

pub const AUX_ANALYST: &str = "The text and visual sentiment of this post disagree. Hypothesize \
missing or conflicting sentiment cues (sarcasm, irony, unrelated imagery, cultural references) \
that could explain the disagreement.";

pub const KB_ASSISTANT: &str = "You summarize retrieved, labelled examples that resemble a post. \
Describe the sentiment trends and patterns among them that are relevant to classifying the post.";

pub const CLASSIFIER: &str = "You are the final classifier of a multimodal sentiment pipeline. \
Choose exactly one label from: Like, Happiness, Anger, Disgust, Fear, Sadness, Surprise. \
Use the combined score, the analysis reports and the original post.";

/// Output-format instruction appended to the system prompt for `schema`.
pub fn format_instruction(schema: ResponseSchema) -> &'static str {
    match schema {
        ResponseSchema::ScoreOnly | ResponseSchema::ScoreAndReport => {
            "Reply with exactly one line: SCORE | one-sentence justification, \
             where SCORE is a number in [-1, 1]."
        }
        ResponseSchema::ReportOnly => "Reply with a short paragraph of plain text.",
        ResponseSchema::LabelAndReport => {
            "Reply with exactly one line: LABEL | one-sentence justification, \
             where LABEL is one of Like, Happiness, Anger, Disgust, Fear, Sadness, Surprise."
        }
        ResponseSchema::Hypotheses => {
            "Reply with a JSON array of strings, one hypothesis per element."
        }
    }
}

/// Follow-up sent once when a reply could not be parsed.
pub fn reask(schema: ResponseSchema, problem: &str) -> String {
    format!(
        "Your previous reply could not be parsed ({problem}). {}",
        format_instruction(schema)
    )
}
