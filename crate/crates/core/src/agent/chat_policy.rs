//! Chat-endpoint planner policy.
//!
//! Sends the planner prompt to a chat-completion endpoint and parses the
//! reply; grounding goes through a second (typically smaller, pixel-capable)
//! endpoint speaking the `<tool_call>` format. Only the most recent
//! screenshots ship as pixels; older steps keep their digest references so
//! history text never shrinks while image payload stays bounded.

use std::collections::VecDeque;

use crate::actions::{parse_grounder_output, parse_planner_output, PlannerTurn, Point};
use crate::chat::{ChatMessage, ChatRequest, ChatTransport, ContentPart, Role, CHAT_TEMPERATURE};
use crate::device::Frame;

use super::prompt::{
    build_planner_prompt, current_observation_message, grounding_user_message, GROUNDING_SYSTEM_PROMPT,
};
use super::{AgentPolicy, HistoryEntry, PolicyError};

pub const DEFAULT_MAX_SCREENSHOTS: usize = 10;

pub struct ChatPolicy {
    planner: Box<dyn ChatTransport>,
    planner_model: String,
    grounder: Box<dyn ChatTransport>,
    grounder_model: String,
    tool_block: String,
    max_screenshots: usize,
    recent_frames: VecDeque<(String, Vec<u8>)>,
}

impl ChatPolicy {
    pub fn new(
        planner: Box<dyn ChatTransport>,
        planner_model: impl Into<String>,
        grounder: Box<dyn ChatTransport>,
        grounder_model: impl Into<String>,
        tool_block: impl Into<String>,
    ) -> Self {
        Self {
            planner,
            planner_model: planner_model.into(),
            grounder,
            grounder_model: grounder_model.into(),
            tool_block: tool_block.into(),
            max_screenshots: DEFAULT_MAX_SCREENSHOTS,
            recent_frames: VecDeque::new(),
        }
    }

    pub fn with_max_screenshots(mut self, max: usize) -> Self {
        self.max_screenshots = max.max(1);
        self
    }

    fn remember(&mut self, frame: &Frame) {
        if self.recent_frames.iter().any(|(d, _)| d == &frame.digest) {
            return;
        }
        self.recent_frames.push_back((frame.digest.clone(), frame.png.clone()));
        while self.recent_frames.len() > self.max_screenshots {
            self.recent_frames.pop_front();
        }
    }

    /// Swaps digest references for cached pixels on the most recent frames;
    /// older references stay textual.
    fn attach_recent_pixels(&self, messages: &mut [ChatMessage]) {
        for msg in messages {
            for part in &mut msg.parts {
                if let ContentPart::ScreenshotRef(digest) = part {
                    if let Some((_, png)) = self.recent_frames.iter().find(|(d, _)| d == digest) {
                        *part = ContentPart::ImagePng(png.clone());
                    }
                }
            }
        }
    }
}

impl AgentPolicy for ChatPolicy {
    fn plan(
        &mut self,
        goal: &str,
        history: &[HistoryEntry],
        frame: &Frame,
        retry_error: Option<&str>,
    ) -> Result<PlannerTurn, PolicyError> {
        self.remember(frame);
        let mut messages = build_planner_prompt(goal, &self.tool_block, history);
        messages.push(current_observation_message(history, frame, retry_error));
        self.attach_recent_pixels(&mut messages);

        let raw = self.planner.complete(&ChatRequest {
            model: self.planner_model.clone(),
            temperature: CHAT_TEMPERATURE,
            messages,
        })?;
        Ok(parse_planner_output(&raw)?)
    }

    fn ground(&mut self, target_desc: &str, frame: &Frame) -> Result<Point, PolicyError> {
        let messages = vec![
            ChatMessage::text(Role::System, GROUNDING_SYSTEM_PROMPT),
            grounding_user_message(target_desc, frame),
        ];
        let raw = self.grounder.complete(&ChatRequest {
            model: self.grounder_model.clone(),
            temperature: CHAT_TEMPERATURE,
            messages,
        })?;
        parse_grounder_output(&raw).map_err(|e| PolicyError::Grounding {
            desc: target_desc.to_string(),
            reason: e.to_string(),
        })
    }
}
