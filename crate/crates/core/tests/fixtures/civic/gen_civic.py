"""Writes the civic-forum fixture: dataset (CSV + JSONL) and the scripted
backend responses that drive a full two-loop induction over it."""
import csv
import json
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))

LONG_D02 = (
    "I ride the number 9 every weekday to get to the hospital where I work night shifts. "
    "The buses on this route are late almost every evening, sometimes by twenty minutes or more. "
    "Last month two buses simply never arrived and I had to pay for a taxi out of pocket. "
    "The posted schedule at the stop has not been updated since the spring. "
    "Please fix the reliability before adding any new routes."
)
LONG_D07 = (
    "Riverside Park used to be the pride of our neighborhood, a place where families spent whole Saturdays. "
    "Now the trash cans overflow by Friday and nobody empties them until Monday morning. "
    "The playground swings have been broken since March and the fountain is dry. "
    "Volunteers tried to organize a cleanup but the city never sent the promised supplies. "
    "We need a real maintenance schedule for the park."
)

DOCS = [
    ("d01", "Bus fares went up again and I can no longer afford a monthly transit pass.", "north", 34, "transit"),
    ("d02", LONG_D02, "south", 51, "transit"),
    ("d03", "Why does a single transit ride cost more here than in the next city over?", "north", 27, "transit"),
    ("d04", "The light rail broke down twice this week and left everyone stranded downtown.", "south", 45, "transit"),
    ("d05", "I wish the transit agency would explain where the new levy money is going.", "north", 62, "transit"),
    ("d06", "The benches in Elm Park are covered in graffiti and nobody cleans them.", "south", 38, "parks"),
    ("d07", LONG_D07, "north", 44, "parks"),
    ("d08", "Our block has no green space at all; the nearest park is a forty minute walk.", "south", 29, "parks"),
    ("d09", "Could the empty lot on Fifth become a small park for the kids who live nearby?", "north", 36, "parks"),
    ("d10", "The library closes at five, which is before most working people can get there.", "south", 58, "library"),
    ("d11", "My kids loved the summer reading program at the library; please bring it back.", "north", 41, "library"),
    ("d12", "The library author talks and coding club are the best free events in town.", "south", 23, "library"),
]

BULLETS = {
    "d01": ["transit fares rising too quickly", "monthly transit pass unaffordable"],
    "d02": ["evening transit buses often late", "transit schedule posted is outdated"],
    "d03": ["transit ride costs exceed neighbors", "single transit fare too high"],
    "d04": ["light rail transit breakdowns", "riders stranded by transit failures"],
    "d05": ["transit levy spending unclear", "transit agency lacks transparency"],
    "d06": ["park benches covered in graffiti", "park cleaning is neglected"],
    "d07": ["park trash cans overflowing", "park playground equipment broken"],
    "d08": ["no nearby park green space", "long walk to nearest park"],
    "d09": ["empty lot could become park", "kids need a nearby park"],
    "d10": ["library hours end too early", "working people miss library hours"],
    "d11": ["library summer reading program missed", "families want library programs back"],
    "d12": ["library author talks valued", "library coding club is popular"],
}

FILTER = {
    "d02": [
        "The buses on this route are late almost every evening, sometimes by twenty minutes or more.",
        "The posted schedule at the stop has not been updated since the spring.",
        "The route is served by electric buses only.",
    ],
    "d07": [
        "Now the trash cans overflow by Friday and nobody empties them until Monday morning.",
        "The playground swings have been broken since March and the fountain is dry.",
    ],
}

TRANSIT = [
    {"name": "Transit Costs", "prompt": "Does the text complain about the cost of public transit?", "example_ids": ["b0-d01-0", "b0-d03-1"]},
    {"name": "Transit Reliability", "prompt": "Does the text describe unreliable or late transit service?", "example_ids": ["b0-d02-0", "b0-d04-0"]},
]
PARKS = [
    {"name": "Park Maintenance", "prompt": "Does the text raise concerns about park upkeep or cleanliness?", "example_ids": ["b0-d06-1", "b0-d07-0"]},
    {"name": "Green Space Access", "prompt": "Does the text ask for more or closer green space?", "example_ids": ["b0-d08-0", "b0-d09-1"]},
]


def library(gen):
    return [
        {"name": "Library Hours", "prompt": "Does the text discuss library opening hours?", "example_ids": [f"b{gen}-d10-1"]},
        {"name": "Library Programs", "prompt": "Does the text mention library programs or events?", "example_ids": [f"b{gen}-d11-1", f"b{gen}-d12-1"]},
    ]


# Answers per criteria prompt; unlisted documents answer E.
ANSWERS = {
    TRANSIT[0]["prompt"]: {"d01": "A", "d03": "A", "d05": "B", "d02": "C"},
    TRANSIT[1]["prompt"]: {"d02": "A", "d04": "A", "d05": "C"},
    PARKS[0]["prompt"]: {"d06": "A", "d07": "A", "d09": "D"},
    PARKS[1]["prompt"]: {"d08": "A", "d09": "A", "d07": "B"},
    library(0)[0]["prompt"]: {"d10": "A", "d12": "B"},
    library(0)[1]["prompt"]: {"d11": "A", "d12": "A"},
}

RATIONALE = {
    "A": "The text addresses this directly.",
    "B": "The text touches on this.",
    "C": "The text is ambiguous on this.",
    "D": "The text is mostly about something else.",
    "E": "The text does not address this.",
}


def ex(doc_id):
    return '"example_id":"%s"' % doc_id


def main():
    with open(os.path.join(HERE, "civic.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "text", "neighborhood", "age", "topic"])
        for d in DOCS:
            w.writerow(d)
    with open(os.path.join(HERE, "civic.jsonl"), "w") as f:
        for i, t, n, a, topic in DOCS:
            f.write(json.dumps({"id": i, "text": t, "neighborhood": n, "age": a, "topic": topic}) + "\n")

    completions = []
    for doc_id, quotes in FILTER.items():
        completions.append({"template": "filter", "contains": [ex(doc_id)], "response": json.dumps({"relevant_quotes": quotes})})
    for doc_id, bullets in BULLETS.items():
        completions.append({"template": "summarize", "contains": [ex(doc_id)], "response": json.dumps({"bullets": bullets})})
    completions.append({"template": "synthesize", "contains": ["transit fares rising"], "response": json.dumps({"patterns": TRANSIT})})
    completions.append({"template": "synthesize", "contains": ["park benches"], "response": json.dumps({"patterns": PARKS})})
    for gen in (0, 1):
        completions.append({
            "template": "synthesize",
            "contains": [f'"example_id":"b{gen}-d1', "library"],
            "response": json.dumps({"patterns": library(gen)}),
        })
    doc_ids = [d[0] for d in DOCS]
    batches = [doc_ids[i:i + 5] for i in range(0, len(doc_ids), 5)]
    for prompt, answers in ANSWERS.items():
        for batch in batches:
            results = []
            for d in batch:
                a = answers.get(d, "E")
                results.append({"example_id": d, "rationale": RATIONALE[a], "answer": a})
            completions.append({
                "template": "score",
                "contains": [prompt, "[{" + ex(batch[0]) + ",", ex(batch[-1]) + ","],
                "response": json.dumps({"pattern_results": results}),
            })
        for d in doc_ids:
            a = answers.get(d, "E")
            completions.append({
                "template": "score",
                "contains": [prompt, "[{" + ex(d) + ","],
                "response": json.dumps({"pattern_results": [{"example_id": d, "rationale": RATIONALE[a], "answer": a}]}),
            })

    rng = random.Random(7)
    axis = {"transit": 0, "parks": 1, "library": 2}
    embeddings = {}
    for doc_id, _, _, _, topic in DOCS:
        for b in BULLETS[doc_id]:
            v = [rng.uniform(-0.001, 0.001) for _ in range(4)]
            v[axis[topic]] += 1.0
            embeddings[b] = [round(x, 6) for x in v]

    script = {"completions": completions, "embeddings": embeddings, "embedding_dim": 4}
    with open(os.path.join(HERE, "civic_script.json"), "w") as f:
        json.dump(script, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
