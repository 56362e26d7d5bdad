"""Regenerates the acceptance fixtures under tests/fixtures.

prohibited_500.jsonl   questions with and without lexicon phrases
parser_valid_300.jsonl wrapped well-formed payloads
parser_invalid_100.jsonl malformed payloads with the expected error class
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "tests" / "fixtures"

TASKS = [
    "extractive-qa", "nli", "multi-choice-single", "multi-choice-multi", "text-generation",
    "summarization", "text-classification", "nlu", "open-book-qa", "closed-book-qa",
]
CONTEXT_FREE = {"closed-book-qa", "multi-choice-single", "multi-choice-multi"}

EN_WORDS = ("which river flows through vienna how many moons does mars have what is the "
            "boiling point of water who wrote hamlet name a prime number greater than ten "
            "why do leaves change colour in autumn").split()
ZH_WORDS = list("哪条河流经维也纳火星有几颗卫星水的沸点是多少谁写了哈姆雷特为什么秋天树叶变色")


def phrases(lang):
    path = ROOT / "assets" / "lexicon" / f"{lang}.txt"
    return [l.strip() for l in path.read_text(encoding="utf-8").splitlines()
            if l.strip() and not l.startswith("#")]


def clean(q, lexicon):
    low = q.lower()
    return not any(p.lower() in low for p in lexicon)


def prohibited(rng):
    lex = {"en": phrases("en"), "zh": phrases("zh")}
    every = lex["en"] + lex["zh"]
    rows = []
    while len(rows) < 500:
        lang = rng.choice(["en", "zh"])
        task = TASKS[len(rows) % len(TASKS)]
        if lang == "en":
            words = [rng.choice(EN_WORDS) for _ in range(rng.randint(4, 10))]
            q = " ".join(words).capitalize() + "?"
        else:
            q = "".join(rng.choice(ZH_WORDS) for _ in range(rng.randint(6, 14))) + "？"
        if not clean(q, every):
            continue
        has = rng.random() < 0.5
        if has:
            p = rng.choice(lex[lang])
            if lang == "en":
                p = rng.choice([p, p.upper(), p.title()])
                q = rng.choice([f"According to {p}, ", f"Based on {p}, ", ""]) + q
                if not q.lower().startswith(("according", "based")):
                    q = q[:-1] + f" in {p}?"
            else:
                q = rng.choice([f"根据{p}，", f"{p}提到"]) + q
        rows.append({"id": f"p{len(rows):03d}", "task": task, "language": lang, "question": q,
                     "has_phrase": has, "expect_reject": has and task in CONTEXT_FREE})
    return rows


def wrap(rng, body):
    style = rng.randrange(7)
    if style == 0:
        return body
    if style == 1:
        return f"```json\n{body}\n```"
    if style == 2:
        return f"Here is the result:\n{body}\nLet me know if you need anything else."
    if style == 3:
        return f"好的，结果如下：\n```\n{body}\n```\n以上。"
    if style == 4:
        return f"Sure! ```json\n{body}\n``` Note: fields follow the schema."
    if style == 5:
        return f"Draft notes (ignore): no braces here.\n\n{body}"
    return f"   \n\t{body}\n\n"


def sentence(rng, zh=False):
    if zh:
        return "".join(rng.choice(ZH_WORDS) for _ in range(rng.randint(4, 12)))
    s = " ".join(rng.choice(EN_WORDS) for _ in range(rng.randint(3, 12))).capitalize()
    extras = ["", " (see {x})", ' with "quotes"', " and a } brace", "\nsecond line", ": a, b; c."]
    return s + rng.choice(extras)


def valid(rng):
    rows = []
    for i in range(300):
        kind = ["generation", "inspection", "logic", "yes-no"][i % 4]
        zh = rng.random() < 0.4
        if kind == "generation":
            expect = {"question": sentence(rng, zh), "thinking_steps": sentence(rng, zh),
                      "answer": sentence(rng, zh)}
            obj = dict(expect)
            if rng.random() < 0.2:
                obj["thinking_steps"] = [obj["thinking_steps"]]
            body = json.dumps(obj, ensure_ascii=rng.random() < 0.3,
                              indent=rng.choice([None, 2]))
        elif kind == "inspection":
            score = rng.randint(1, 5)
            expect = {"analysis_steps": sentence(rng, zh), "score": score}
            obj = {"analysis_steps": expect["analysis_steps"],
                   "score": rng.choice([score, str(score), float(score)])}
            body = json.dumps(obj, ensure_ascii=False, indent=rng.choice([None, 2]))
        elif kind == "logic":
            expect = {"thought_process": sentence(rng, zh)}
            body = json.dumps(expect, ensure_ascii=False)
        else:
            v = rng.choice(["yes", "no"])
            expect = {"verdict": v}
            body = rng.choice({"yes": ["Yes", "yes.", "**Yes**", "是", "YES, it does."],
                               "no": ["No", "no.", "\"No\"", "否", "No, it stands alone."]}[v])
            rows.append({"id": f"v{i:03d}", "schema": kind, "text": body, "expect": expect})
            continue
        rows.append({"id": f"v{i:03d}", "schema": kind, "text": wrap(rng, body), "expect": expect})
    return rows


def invalid(rng):
    cases = []
    parse = [
        ("generation", "I could not produce a question for this passage."),
        ("generation", ""),
        ("generation", '{"question": "unterminated", "answer": "x"'),
        ("generation", "```json\n[1, 2, 3]\n```"),
        ("generation", "{question: bare keys, answer: nope}"),
        ("logic", "The reasoning is: first, second, third."),
        ("logic", "{'thought_process': 'single quotes'}"),
        ("inspection", "The score is four out of five."),
        ("inspection", "Score: 4"),
        ("inspection", ""),
        ("yes-no", "Maybe"),
        ("yes-no", "It depends on the passage."),
        ("yes-no", "Unclear."),
        ("yes-no", ""),
        ("yes-no", "Yesterday it was fine."),
    ]
    schema = [
        ("generation", {"question": "Q?", "answer": "A"}),
        ("generation", {"question": "", "thinking_steps": "t", "answer": "A"}),
        ("generation", {"question": "Q?", "thinking_steps": "t"}),
        ("generation", {"thinking_steps": "t", "answer": "A"}),
        ("generation", {"question": "Q?", "thinking_steps": "   ", "answer": "A"}),
        ("generation", {"question": None, "thinking_steps": "t", "answer": "A"}),
        ("generation", {"q": "Q?", "l": "t", "a": "A"}),
        ("logic", {"reasoning": "x"}),
        ("logic", {"thought_process": ""}),
        ("inspection", {"score": 3}),
        ("inspection", {"analysis_steps": "fine"}),
        ("inspection", {"analysis_steps": "", "score": 4}),
        ("inspection", {"analysis_steps": "fine", "score": None}),
        ("inspection", {"analysis_steps": "fine", "score": ""}),
    ]
    range_ = [
        ("inspection", {"analysis_steps": "a", "score": 0}),
        ("inspection", {"analysis_steps": "a", "score": 6}),
        ("inspection", {"analysis_steps": "a", "score": 7}),
        ("inspection", {"analysis_steps": "a", "score": -1}),
        ("inspection", {"analysis_steps": "a", "score": 2.5}),
        ("inspection", {"analysis_steps": "a", "score": "high"}),
        ("inspection", {"analysis_steps": "a", "score": "10"}),
        ("inspection", {"analysis_steps": "a", "score": [3]}),
        ("inspection", {"analysis_steps": "a", "score": True}),
        ("inspection", {"analysis_steps": "a", "score": "4/5"}),
    ]
    i = 0
    while len(cases) < 100:
        pick = rng.random()
        if pick < 0.34:
            s, text = parse[i % len(parse)]
            cases.append({"schema": s, "text": text, "error": "ParseError"})
        elif pick < 0.67:
            s, obj = schema[i % len(schema)]
            cases.append({"schema": s, "text": wrap(rng, json.dumps(obj, ensure_ascii=False)),
                          "error": "SchemaError"})
        else:
            s, obj = range_[i % len(range_)]
            cases.append({"schema": s, "text": wrap(rng, json.dumps(obj)), "error": "RangeError"})
        i += 1
    for n, c in enumerate(cases):
        c["id"] = f"x{n:03d}"
    return cases


def dump(name, rows):
    with open(OUT / name, "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    dump("prohibited_500.jsonl", prohibited(random.Random(500)))
    dump("parser_valid_300.jsonl", valid(random.Random(300)))
    dump("parser_invalid_100.jsonl", invalid(random.Random(100)))


if __name__ == "__main__":
    main()
