#include "tacitree/gateway/prompts.hpp"

#include <string>

namespace tacitree::prompts {

#define TACITREE_PROMPT(fn, id, body)          \
  const PromptTemplate& fn() {                 \
    static const PromptTemplate t{std::string(id), body}; \
    return t;                                  \
  }

TACITREE_PROMPT(persona, kPersona, R"(Here is a brief description of a person:
{persona}

Please break it down into several components, including: "demographics" (including name, age, living location, birthplace, marital status, etc.), "career_life_and_goals" (make sure this part only contains things related with the person's career life), and "everyday_life_and_hobbies" (make sure this part is nothing related with the person's career life). Just list those information that are presented and leave others that are unknown. Below are some examples, try to make each point separate from each other and self-explanable. Only output a JSON object like in the following examples.
Example 1:
Input: An eco-friendly lifestyle podcaster who features change-makers and promotes sustainable living
Output:
```json
{{
    "demographics": {{
        "occupation": "This person is an eco-friendly lifestyle podcaster."
    }},
    "career_life_and_goals": [
        "This person features change-makers and promotes sustainable living."
    ]
}}
```

Example 2:
Input: a nostalgic Azerbaijani pop music lover
Output:
```json
{{
    "demographics": {{
        "nationality": "This person is from Azerbaijani."
    }},
    "everyday_life_and_hobbies": [
        "This person enjoys listening to pop music.",
        "This person likely engages in nostalgic experiences related to Azerbaijani culture."
    ]
}}
```)")

TACITREE_PROMPT(opposed_reasons, kOpposedReasons,
                R"({per_info} However, they have not been able to do it recently. Can you give me at least 20 implicit reasons why that person cannot do it?
The reasons should be completely different from each other and belong to different categories.
The reason should be specific with detailed information, like why it happens.
The reason cannot include words related to "{traits_info}"
Please explain the reasoning in only one sentence. Please only output the reasons with the format:
1:
2:)")

TACITREE_PROMPT(supportive_reasons, kSupportiveReasons,
                R"({per_info} Can you give me at least 20 implicit reason information that supports this claim? Therefore, if I ask you, "Does {per_info}?", you have to answer "yes".
The reason information should be completely different from each other and belong to different categories.
The reason should be specific with detailed information, like why it happens.
The reason cannot include words related to "{traits_info}"
Please explain the reasoning in only one sentence. Please only output the reasons with the format:
1:
2:)")

TACITREE_PROMPT(opposed_question, kOpposedQuestion,
                R"(Here's the conversation between a user(speaker 1) and a chatbot assistant.
Speaker 1 has the following persona trait: {per_info}. However, speaker 1 cannot do the trait due to the reason that {reason_info}.
Now, speaker 1 asks you a question related to the trait. {reason_info} affect your answer to this question.
You should tell speaker 1 they cannot do the trait due to the reason.
The trait should be mentioned in the question.
The question itself should not mention the reason or effect of the reason.
Questions should be asked in the first person. Include "I".
The question should not be a yes/no question.
The question needs to be diverse.

Please only output the question in the format of less than 20 words without any additional sentences.)")

TACITREE_PROMPT(select_opposed, kSelectOpposed,
                R"({per_info}. Here are potential implicit reasons why this person is unable to follow this trait: {str_reason}.
Could you select the reason that is both the most logically sound and subtly implied?
Please select only from the provided options and output the reason only.)")

TACITREE_PROMPT(distractors, kDistractors,
                R"(Consider a person with specific personality traits {persona} that could serve as responses to a given question {question}.
Can you generate additional scenarios that reflect or align with these personality traits to support the question?
Please output 5 scenarios that are relevant to the given traits and question.
The scenarios should contain only one sentence.
The scenarios can talk about both {traits_info} or other stuff that is related to {traits_info} but do not have to be the same.
Please output the scenarios only with the index number.

For example:

Trait: I love sports
Question: I'm bored; can you give me some suggestions?
Scenarios:
1. I love playing basketball.
2. My favorite basketball player is Stephen Curry.)")

TACITREE_PROMPT(transcript, kTranscript,
                R"(There are two speakers. Speaker 1 encounters the scenario that "{scenario}". Speaker 2 is the AI assistant.
Based on the information. Can you generate a conversation with at least 10 turns?
Speaker 1 shouldn't mention the scenario too early. It must be mentioned in the later section.
Speaker 1 is exactly the person who encounters the scenario.
The beginning turns should serve as a warm-up to introduce the scenario in a natural way.
The conversation should be centered around the scenario without any irrelevant or extra information that is not related to the scenario.
For Speaker 1, please do not start the conversation by saying something similar to "I'm feeling a bit overwhelmed lately." or use the same format as this sentence.
Include diverse styles like detailed explanations, step-by-step guidance, casual small talk, humor, storytelling, and problem-solving.
The conversation should feel realistic and flow naturally.
Aim for a balance of formality and informality, capturing nuanced exchanges that go beyond simple responses.
Please output the conversation in the following format:
Speaker1: ...
Assistant: ...

Speaker1: ...
Assistant: ...)")

TACITREE_PROMPT(summarize_high, kSummarizeHigh,
                R"(Can you summarize {text} in one sentence to only contain the high-level information?
Please only output the summary without anything else.)")

TACITREE_PROMPT(summarize_leaf, kSummarizeLeaf,
                R"(Below are facts about a user, collected from past conversations.
{text}

Write a condensed summary of these facts that retains all essential details (people, places, dates, preferences, constraints and events).
Please only output the summary without anything else.)")

TACITREE_PROMPT(extract_facts, kExtractFacts,
                R"(Below is a conversation session between a user and an AI assistant.
{transcript}

Extract all facts from this session that capture long-term context about the user: personal information, preferences, habits, plans, events, health, relationships and constraints.
Write each fact as one standalone declarative sentence. Refer to the user as "The user" instead of using pronouns.
Output one fact per line and nothing else. If there are no facts, output NONE.)")

TACITREE_PROMPT(relevance_batch, kRelevanceBatch,
                R"(A user asked the following question:
{query}

Below are numbered summaries of the user's past conversations.
{candidates}

Which summaries contain information that is relevant to answering the question, including indirect or implicit evidence (for example, circumstances that would prevent or support the user doing something)?
Output only the relevant numbers as a comma-separated list (for example: 2, 5). If none are relevant, output NONE.)")

TACITREE_PROMPT(relevance_single, kRelevanceSingle,
                R"(A user asked the following question:
{query}

Here is a summary of one of the user's past conversations:
{candidate}

Is this summary relevant to answering the question, directly or implicitly? Answer YES or NO.)")

TACITREE_PROMPT(verify_supportive, kVerifySupportive,
                R"(Claim: {per_info}
Scenario: {scenario}

Does the scenario support the claim? Provide an answer only if you are certain. Answer with exactly one word: yes, no, or uncertain.)")

TACITREE_PROMPT(answer, kAnswer,
                R"(You are an assistant with long-term memory of a user. Here is what you remember about the user:
{context}

The user now says:
{question}

Answer the user in a few sentences, taking everything you remember into account.)")

TACITREE_PROMPT(judge_answer, kJudgeAnswer,
                R"(Question: {question}
Ground-truth answer: {gold}
Predicted answer: {predicted}

Is the predicted answer semantically equivalent to the ground-truth answer? Answer YES or NO.)")

#undef TACITREE_PROMPT

}  // namespace tacitree::prompts
