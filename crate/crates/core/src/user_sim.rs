//! Simulated phone owner.
//!
//! Answers `ask_user` clarification requests from the information that was
//! deliberately withheld from the task goal, and politely refuses anything
//! out of scope. The scripted backend is a pure function of (profile,
//! question) so no-fabrication is checkable; the chat backend forwards the
//! rendered prompt to a chat-completion endpoint.

use serde::{Deserialize, Serialize};

use crate::chat::{ChatMessage, ChatRequest, ChatTransport, EndpointError, Role, CHAT_TEMPERATURE};
use crate::device::DeviceClock;

pub const REFUSAL_TEXT: &str =
    "I'm sorry, I can't help with that. Please focus on the task at hand.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserBackend {
    Scripted,
    ChatEndpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub goal: String,
    /// The deliberately omitted facts, one "key: value" line each for the
    /// scripted backend; free text is allowed for the chat backend.
    pub relevant_information: String,
    pub today: DeviceClock,
    pub backend: UserBackend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Answered,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReply {
    pub text: String,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub question: String,
    pub reply: String,
}

/// Renders the user-agent system prompt with the goal, withheld information,
/// and frozen date substituted.
pub fn build_user_prompt(profile: &UserProfile) -> String {
    format!(
        "You are acting as a mobile phone user.\n\
         An mobile GUI agent is executing a task on your phone.\n\
         The task goal is: {goal}.\n\
         You need to answer questions from the mobile GUI agent.\n\
         The relevant information for the task is: {info}.\n\
         If the question is not related to the task or no more task-related information is available, \
         you need to refuse to answer in a polite manner.\n\
         DO NOT make up any information. You can ONLY give the answer based on the relevant information \
         and the task goal.\n\
         Today is {date}, {weekday}. If the question is about the date, you need to answer the correct \
         date based on the current date.",
        goal = profile.goal,
        info = profile.relevant_information,
        date = profile.today.date,
        weekday = profile.today.weekday,
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub key: String,
    pub value: String,
}

/// Parses `relevant_information` as newline-separated "key: value" facts.
/// Lines without a colon are ignored.
pub fn parse_facts(info: &str) -> Vec<Fact> {
    info.lines()
        .filter_map(|line| {
            let (key, value) = line.split_once(':')?;
            let key = key.trim();
            let value = value.trim();
            (!key.is_empty() && !value.is_empty())
                .then(|| Fact { key: key.to_string(), value: value.to_string() })
        })
        .collect()
}

/// Lowercased alphanumeric tokens of length >= 2.
fn tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

pub struct UserSim {
    profile: UserProfile,
    chat: Option<Box<dyn ChatTransport>>,
    chat_model: String,
}

impl UserSim {
    pub fn scripted(profile: UserProfile) -> Self {
        Self {
            profile: UserProfile { backend: UserBackend::Scripted, ..profile },
            chat: None,
            chat_model: String::new(),
        }
    }

    pub fn chat(profile: UserProfile, transport: Box<dyn ChatTransport>, model: impl Into<String>) -> Self {
        Self {
            profile: UserProfile { backend: UserBackend::ChatEndpoint, ..profile },
            chat: Some(transport),
            chat_model: model.into(),
        }
    }

    pub fn profile(&self) -> &UserProfile {
        &self.profile
    }

    /// Answers one clarification request. The scripted backend ignores the
    /// dialogue (each query is independent); the chat backend forwards the
    /// rendered prompt plus the dialogue so far.
    pub fn answer_query(&self, question: &str, dialogue: &[DialogueTurn]) -> Result<UserReply, EndpointError> {
        match self.profile.backend {
            UserBackend::Scripted => Ok(self.scripted_answer(question)),
            UserBackend::ChatEndpoint => self.chat_answer(question, dialogue),
        }
    }

    fn scripted_answer(&self, question: &str) -> UserReply {
        let q_tokens = tokens(question);
        let has = |t: &str| q_tokens.iter().any(|q| q == t);

        // Date questions are answered from the frozen clock, never from facts.
        if has("today") {
            return UserReply { text: self.profile.today.date.clone(), disposition: Disposition::Answered };
        }

        // Key-phrase lookup: highest token overlap with a fact key wins,
        // ties broken by declaration order.
        let facts = parse_facts(&self.profile.relevant_information);
        let mut best: Option<(usize, &Fact)> = None;
        for fact in &facts {
            let overlap = tokens(&fact.key).iter().filter(|t| has(t)).count();
            if overlap > 0 && best.map_or(true, |(b, _)| overlap > b) {
                best = Some((overlap, fact));
            }
        }
        if let Some((_, fact)) = best {
            return UserReply { text: fact.value.clone(), disposition: Disposition::Answered };
        }

        if has("date") || has("day") {
            return UserReply { text: self.profile.today.date.clone(), disposition: Disposition::Answered };
        }

        UserReply { text: REFUSAL_TEXT.to_string(), disposition: Disposition::Refused }
    }

    fn chat_answer(&self, question: &str, dialogue: &[DialogueTurn]) -> Result<UserReply, EndpointError> {
        let transport = self.chat.as_ref().expect("chat backend has a transport");
        let mut messages = vec![ChatMessage::text(Role::System, build_user_prompt(&self.profile))];
        for turn in dialogue {
            messages.push(ChatMessage::text(Role::User, &turn.question));
            messages.push(ChatMessage::text(Role::Assistant, &turn.reply));
        }
        messages.push(ChatMessage::text(Role::User, question));

        let text = transport.complete(&ChatRequest {
            model: self.chat_model.clone(),
            temperature: CHAT_TEMPERATURE,
            messages,
        })?;

        // Refusal heuristic: the reply answered something iff it carries a
        // token from the withheld facts (or the date).
        let mut fact_tokens: Vec<String> = Vec::new();
        let facts = parse_facts(&self.profile.relevant_information);
        if facts.is_empty() {
            fact_tokens.extend(tokens(&self.profile.relevant_information));
        } else {
            for fact in &facts {
                fact_tokens.extend(tokens(&fact.value));
            }
        }
        fact_tokens.push(self.profile.today.date.to_lowercase());
        let reply_tokens = tokens(&text);
        let answered = fact_tokens.iter().any(|t| reply_tokens.iter().any(|r| r == t))
            || text.contains(&self.profile.today.date);
        Ok(UserReply {
            text,
            disposition: if answered { Disposition::Answered } else { Disposition::Refused },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clock() -> DeviceClock {
        DeviceClock { date: "2025-10-16".into(), weekday: "Thursday".into() }
    }

    fn profile(goal: &str, info: &str) -> UserProfile {
        UserProfile {
            goal: goal.into(),
            relevant_information: info.into(),
            today: clock(),
            backend: UserBackend::Scripted,
        }
    }

    #[test]
    fn prompt_substitutes_goal_info_and_date() {
        let p = profile("Send an email to Kevin", "Kevin's email: kevin_zhang@example.com");
        let prompt = build_user_prompt(&p);
        assert!(prompt.contains("The task goal is: Send an email to Kevin."));
        assert!(prompt.contains("The relevant information for the task is: Kevin's email: kevin_zhang@example.com."));
        assert!(prompt.contains("Today is 2025-10-16, Thursday."));
        assert!(prompt.contains("refuse to answer in a polite manner"));
        assert!(prompt.contains("DO NOT make up any information"));
    }

    #[test]
    fn prompt_stays_well_formed_with_empty_info() {
        let prompt = build_user_prompt(&profile("Do a thing", ""));
        assert!(prompt.contains("The relevant information for the task is: ."));
    }

    #[test]
    fn answers_fact_questions_with_the_verbatim_value() {
        let sim = UserSim::scripted(profile("Send an email to Kevin", "Kevin's email: kevin_zhang@example.com"));
        let reply = sim.answer_query("What is Kevin's email address?", &[]).unwrap();
        assert_eq!(reply.disposition, Disposition::Answered);
        assert_eq!(reply.text, "kevin_zhang@example.com");
    }

    #[test]
    fn refuses_off_scope_questions_without_leaking() {
        let sim = UserSim::scripted(profile("Send an email to Kevin", "Kevin's email: kevin_zhang@example.com"));
        let reply = sim.answer_query("What's your favorite movie?", &[]).unwrap();
        assert_eq!(reply.disposition, Disposition::Refused);
        assert!(!reply.text.contains("kevin_zhang"));
        assert_eq!(reply.text, REFUSAL_TEXT);
    }

    #[test]
    fn answers_date_questions_from_the_frozen_clock() {
        let sim = UserSim::scripted(profile("Schedule lunch", "Lunch guest: Sam"));
        let reply = sim.answer_query("What is today's date?", &[]).unwrap();
        assert_eq!(reply.disposition, Disposition::Answered);
        assert_eq!(reply.text, "2025-10-16");
    }

    #[test]
    fn date_fact_keys_still_win_for_non_today_questions() {
        let sim = UserSim::scripted(profile("Plan", "meeting date: 2025-11-02"));
        let reply = sim.answer_query("What date is the meeting?", &[]).unwrap();
        assert_eq!(reply.text, "2025-11-02");
        let reply = sim.answer_query("What is today's date?", &[]).unwrap();
        assert_eq!(reply.text, "2025-10-16");
    }

    #[test]
    fn tie_break_prefers_higher_overlap_then_declaration_order() {
        let info = "pickup code: 1111\ndoor code: 2222\npickup door code: 3333";
        let sim = UserSim::scripted(profile("Fetch package", info));
        // Three key tokens beat two.
        assert_eq!(sim.answer_query("What is the pickup door code?", &[]).unwrap().text, "3333");
        // Equal overlap: first declared fact wins.
        assert_eq!(sim.answer_query("What is the code?", &[]).unwrap().text, "1111");
    }

    #[test]
    fn identical_questions_get_identical_replies() {
        let sim = UserSim::scripted(profile("Send an email to Kevin", "Kevin's email: kevin_zhang@example.com"));
        let a = sim.answer_query("What is Kevin's email?", &[]).unwrap();
        let b = sim.answer_query("What is Kevin's email?", &[]).unwrap();
        assert_eq!(a, b);
    }

    #[derive(Clone)]
    struct CannedChat {
        reply: &'static str,
        seen: std::sync::Arc<std::sync::Mutex<Vec<ChatRequest>>>,
    }

    impl CannedChat {
        fn new(reply: &'static str) -> Self {
            Self { reply, seen: Default::default() }
        }
    }

    impl ChatTransport for CannedChat {
        fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError> {
            self.seen.lock().unwrap().push(request.clone());
            Ok(self.reply.to_string())
        }
    }

    #[test]
    fn chat_backend_sends_prompt_dialogue_and_zero_temperature() {
        let canned = CannedChat::new("kevin_zhang@example.com");
        let seen = canned.seen.clone();
        let sim = UserSim::chat(
            profile("Send an email to Kevin", "Kevin's email: kevin_zhang@example.com"),
            Box::new(canned),
            "gpt-test",
        );
        let dialogue = vec![DialogueTurn { question: "hi?".into(), reply: "yes".into() }];
        let reply = sim.answer_query("What is Kevin's email?", &dialogue).unwrap();
        assert_eq!(reply.disposition, Disposition::Answered);

        let seen = seen.lock().unwrap();
        let req = &seen[0];
        assert_eq!(req.temperature, 0.0);
        assert_eq!(req.model, "gpt-test");
        assert_eq!(req.messages.len(), 4); // system + prior Q/A + question
        assert!(req.messages[0].flat_text().contains("You are acting as a mobile phone user."));
        assert_eq!(req.messages[1].flat_text(), "hi?");
        assert_eq!(req.messages[2].flat_text(), "yes");
    }

    #[test]
    fn chat_refusal_heuristic_trips_when_no_fact_token_appears() {
        let sim = UserSim::chat(
            profile("Send an email to Kevin", "Kevin's email: kevin_zhang@example.com"),
            Box::new(CannedChat::new("Sorry, I cannot share that.")),
            "gpt-test",
        );
        let reply = sim.answer_query("What's your favorite movie?", &[]).unwrap();
        assert_eq!(reply.disposition, Disposition::Refused);
    }
}
