//! Zero-shot prompt rendering.
//!
//! Every completion backend receives the same template: a task block, the
//! 19 value definitions in canonical order, an instruction block, an
//! optional EXTERNAL KNOWLEDGE block with one `"- "` bullet per retrieved
//! chunk, and exactly one context body. The target sentence always appears
//! in its own TARGET SENTENCE field. Rendering is byte-deterministic, so
//! prompt hashes are safe cache keys.

use crate::context::{ContextInput, ContextKind};
use crate::knowledge::KbChunk;

use super::ModelIoError;

/// The fixed template header (task, definitions, instructions), shipped as
/// a text asset.
pub const PROMPT_HEADER: &str = include_str!("../../assets/prompt_header.txt");

/// A rendered prompt plus the facts a cache or logger needs about it.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptRendering {
    pub text: String,
    pub condition: crate::context::ContextCondition,
    pub has_knowledge_block: bool,
}

/// Render the prompt for one assembled context input. `retrieved` is given
/// only in RAG runs; bullets keep retrieval order.
pub fn render_prompt(
    ctx: &ContextInput,
    retrieved: Option<&[KbChunk]>,
) -> Result<PromptRendering, ModelIoError> {
    let chunks = retrieved.unwrap_or(&[]);
    for chunk in chunks {
        if chunk.text.trim().is_empty() {
            return Err(ModelIoError::EmptyChunkText { chunk_id: chunk.chunk_id.clone() });
        }
    }
    let has_knowledge_block = !chunks.is_empty();

    let mut text = String::with_capacity(PROMPT_HEADER.len() + 512);
    text.push_str(PROMPT_HEADER);

    if has_knowledge_block {
        text.push('\n');
        text.push_str("EXTERNAL KNOWLEDGE:\n");
        for chunk in chunks {
            text.push_str("- ");
            // Bullets are single lines; fold any internal newlines.
            text.push_str(&chunk.text.split_whitespace().collect::<Vec<_>>().join(" "));
            text.push('\n');
        }
    }

    let target = ctx.target.text.as_str();
    text.push('\n');
    match ctx.condition.kind {
        ContextKind::Sentence => {
            text.push_str("TARGET SENTENCE:\n");
            text.push_str(target);
            text.push('\n');
        }
        ContextKind::Window => {
            text.push_str("CONTEXT WINDOW:\n");
            text.push_str(&ctx.context_text());
            text.push_str("\n\nTARGET SENTENCE:\n");
            text.push_str(target);
            text.push('\n');
        }
        ContextKind::Document => {
            text.push_str("DOCUMENT:\n");
            text.push_str(&ctx.context_text());
            text.push_str("\n\nTARGET SENTENCE:\n");
            text.push_str(target);
            text.push('\n');
        }
    }

    Ok(PromptRendering { text, condition: ctx.condition, has_knowledge_block })
}
