#!/usr/bin/env python3
"""Write the replay transcript for the bundled mini corpus.

Every prompt the four pipelines send on the mini corpus is rendered and paired
with a hand-written completion, standing in for a recorded session against a
live endpoint. Re-run after changing templates, prompt bindings or the
rerank scorer, then refresh the golden files with ``scripts/refresh_goldens.py``.
"""

from __future__ import annotations

import argparse

from ehrqa import data_path
from ehrqa.corpus import load_dataset
from ehrqa.genclient import load_template, render_template, write_transcript
from ehrqa.selection import LexicalScorer, calibrate, prompt_bindings, select_by_rerank

E2E = {
    "1": (
        "Answer:\n"
        "He had a ruptured thoracoabdominal aortic aneurysm, which needed emergent repair. [1]\n"
        "He underwent an emergent salvage repair with a Dacron tube graft. | 2 |\n"
        "His wound is healing well with a small open area. |8|.\n"
        "He will recover at home. |12|"
    ),
    "2": (
        "Warfarin was held because a head CT showed a subdural hematoma. |3,4|\n"
        "The INR was reversed given the intracranial bleed. (4)\n"
        "Neurosurgery advised no anticoagulation for at least two weeks. |5|"
    ),
    "3": (
        "A drug-eluting stent was placed for a blocked right coronary artery. |4|\n"
        "Aspirin and clopidogrel together prevent stent thrombosis. |5|\n"
        "Both should be taken for at least twelve months. |7|"
    ),
    "4": (
        "His kidney injury was attributed to contrast-induced nephropathy with dehydration. |3|\n"
        "|2|\n"
        "Creatinine rose after intravenous contrast and improved with fluids. [1, 4]"
    ),
}

LIST = {
    "1": "1, 2, 8",
    "2": "3, 4, 5, 6",
    "3": "The essential notes are 4 and 5.",
    "4": "1,2,3",
}

INDIVIDUAL = {
    "1": ["Yes", "Yes", "No", "No", "No", "No", "No", "Yes", "No"],
    "2": ["No", "No", "Yes", "Yes", "yes.", "No", "No"],
    "3": ["No", "Yes", "No", "Yes", "Yes", "No", "Yes", "No"],
    "4": ["Yes", "Yes", "Yes", "It is relevant", "No", "No"],
}

DRAFT = {
    "1": (
        "Your father had a ruptured thoracoabdominal aortic aneurysm, which is life-threatening and required "
        "emergent repair. He underwent an emergent salvage repair with a Dacron tube graft using deep hypothermic "
        "circulatory arrest. His long recovery reflects the severity of the rupture, and his wound is now healing "
        "well with only a very small open area."
    ),
    "2": (
        "Warfarin was held because a head CT showed a small subdural hematoma. Her INR was reversed with vitamin K "
        "and prothrombin complex concentrate given the intracranial bleed. Neurosurgery recommended no "
        "anticoagulation for at least two weeks, so restarting should wait for their clearance."
    ),
    "3": (
        "Your husband had a 95% blockage of the right coronary artery, which was treated with a drug-eluting stent. "
        "He was loaded with clopidogrel and continued on aspirin to prevent stent thrombosis, a dangerous clot "
        "inside the new stent. Aspirin 81 mg daily and clopidogrel 75 mg daily are recommended for at least twelve "
        "months after drug-eluting stent placement. He should follow up with cardiology in two weeks to review "
        "these medications, check his blood pressure and discuss his overall recovery."
    ),
    "4": (
        "His creatinine rose from 1.1 to 2.4 after he received intravenous contrast for a CT angiogram.\n"
        "The rise was attributed to contrast-induced nephropathy in the setting of dehydration. It improved with fluids."
    ),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(data_path("mini.transcript.jsonl")))
    ap.add_argument("--list-template", default="list_role")
    ap.add_argument("--individual-template", default="indiv_role")
    args = ap.parse_args()

    ds = load_dataset(data_path("mini.xml"), data_path("mini.key.json"))
    e2e, lst, ind, step2 = (
        load_template(n) for n in ("e2e", args.list_template, args.individual_template, "second_step")
    )
    threshold = calibrate(ds.cases, ds.keys, LexicalScorer())

    records: dict[str, dict] = {}

    def add(template, bindings, completion):
        messages = render_template(template, bindings)
        records.setdefault(repr(messages), {"messages": messages, "completion": completion})

    for c in ds.cases:
        add(e2e, prompt_bindings(c, c.numbered_sentences()), E2E[c.case_id])
        add(lst, prompt_bindings(c, c.numbered_sentences()), LIST[c.case_id])
        for s, reply in zip(c.sentences, INDIVIDUAL[c.case_id]):
            add(ind, prompt_bindings(c, s.text), reply)

        valid = set(c.sentence_ids)
        list_ids = {int(t) for t in LIST[c.case_id].replace(",", " ").replace(".", " ").split() if t.isdigit()} & valid
        ind_ids = {s.id for s, r in zip(c.sentences, INDIVIDUAL[c.case_id]) if r.lower().startswith("yes")}
        rerank_ids = set(select_by_rerank(c, LexicalScorer(), threshold).essentials)
        for ids in (list_ids, ind_ids, rerank_ids):
            essentials = [s.text for s in c.sentences if s.id in ids]
            add(step2, prompt_bindings(c, "\n".join(essentials)), DRAFT[c.case_id])

    write_transcript(args.out, list(records.values()))
    print(f"wrote {len(records)} records to {args.out}")


if __name__ == "__main__":
    main()
