#!/usr/bin/env python3
"""Regenerates data/dialogues.jsonl: 50 assistant-style dialogues, 5-7 user
turns each, with prompt lengths spread from one word to a few hundred.

The corpus is synthetic. It imitates the shape of crowd-sourced assistant
conversations (an opening request, short follow-ups, the occasional long
pasted context) so the replay harness sees realistic length variability.
"""

import json
import random
import sys

SEED = 20241017

TOPICS = [
    ("a sourdough starter", "baking"),
    ("the French Revolution", "history"),
    ("binary search trees", "programming"),
    ("a marathon training plan", "fitness"),
    ("photosynthesis", "biology"),
    ("Kubernetes deployments", "devops"),
    ("a cover letter for a nursing job", "writing"),
    ("the Monty Hall problem", "probability"),
    ("composting in an apartment", "gardening"),
    ("Rust ownership rules", "programming"),
    ("a budget for a student", "finance"),
    ("black holes", "astronomy"),
    ("learning Spanish verbs", "languages"),
    ("a birthday party for a 7 year old", "planning"),
    ("SQL window functions", "databases"),
    ("the causes of inflation", "economics"),
    ("a short horror story", "creative writing"),
    ("mitochondria", "biology"),
    ("setting up a home network", "networking"),
    ("the rules of chess castling", "games"),
    ("a vegan lasagna", "cooking"),
    ("Bayes' theorem", "statistics"),
    ("writing unit tests in Python", "programming"),
    ("the water cycle", "earth science"),
    ("negotiating a salary", "careers"),
]

OPENERS = [
    "Can you explain {t} to me?",
    "I need help with {t}.",
    "What is the simplest way to understand {t}?",
    "Write a short introduction to {t} for a beginner.",
    "I'm a {d} newbie. Where should I start with {t}?",
    "Give me three key facts about {t}.",
    "How would you teach {t} to a high school student?",
    "Hello! I have a question about {t}.",
]

FOLLOWUPS = [
    "Thanks!",
    "Why?",
    "Can you give an example?",
    "Make it shorter.",
    "What are the most common mistakes people make here?",
    "Could you expand on the second point?",
    "How does that compare to the alternatives?",
    "Explain it like I am five.",
    "Ok",
    "Is there a good book or resource on this?",
    "What would an expert add to that answer?",
    "Can you summarize everything so far in a table?",
    "That doesn't sound right to me, are you sure?",
    "Now rewrite it in a more formal tone.",
    "What if I only have ten minutes a day for this?",
    "Give me a step by step checklist I can follow tomorrow morning.",
    "Interesting.",
    "How long does it usually take to get good at this?",
    "What questions should I ask a professional about it?",
    "Translate your last answer into plain English without jargon.",
]

FILLER = [
    "I tried a few things already but none of them worked the way I expected.",
    "My friend told me something completely different last week.",
    "For context, I have been working on this for about two months now.",
    "I read a blog post about it but it skipped over the details that matter.",
    "The deadline is on Friday so I would like something practical.",
    "Please keep in mind that I do not have a lot of money to spend on tools.",
    "I am mostly interested in the reasoning behind each step, not just the answer.",
    "Here is what I wrote so far, feel free to point out anything that looks off.",
    "Some sources online contradict each other, which makes this confusing.",
    "I would also like to understand the history of how people arrived at this approach.",
    "When I follow the usual advice the result is inconsistent from one attempt to the next.",
    "It would help if you could relate it to something from everyday life.",
]


def long_prompt(rng, topic, sentences):
    body = [rng.choice(FILLER) for _ in range(sentences)]
    return f"I have a longer question about {topic}. " + " ".join(body) + " What do you suggest?"


def main(path):
    rng = random.Random(SEED)
    lines = []
    for i in range(50):
        topic, domain = TOPICS[i % len(TOPICS)]
        turns = [rng.choice(OPENERS).format(t=topic, d=domain)]
        n_turns = rng.choice([5, 5, 5, 6, 6, 7])
        for _ in range(n_turns - 1):
            roll = rng.random()
            if roll < 0.12:
                turns.append(long_prompt(rng, topic, rng.randint(3, 16)))
            else:
                turns.append(rng.choice(FOLLOWUPS))
        if i == 0:
            # Pin the extremes of the length range.
            turns[1] = "Thanks!"
            turns[3] = long_prompt(rng, topic, 18)
        lines.append(json.dumps({"id": f"conv-{i + 1:03d}", "turns": turns}, ensure_ascii=False))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/dialogues.jsonl")
