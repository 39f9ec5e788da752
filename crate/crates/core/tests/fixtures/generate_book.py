"""Regenerate the fixture book: annotations, page images and character vectors.

Run from this directory:  python3 generate_book.py
Then re-record the cassettes:  cargo run -p comicscript-core --example record_fixture
"""

import json
import random
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from sklearn.cluster import HDBSCAN

OUT = Path(__file__).parent / "book"
W, H = 600, 900
PAGES = [11, 12, 13, 14, 15, 16, 17]
PANELS_PER_PAGE = [7, 6, 7, 6, 7, 6, 6]
ROWS = {7: [2, 3, 2], 6: [2, 2, 2]}
CHAR_W = 6
LINE_H = 12
LINE_STEP = 14
WRAP = 24
MIN_CLUSTER_SIZE = 5

# Instances per (identity, target cluster); "N" is noise.
POOL = {
    "Curt": {"A": 11, "B": 3, "N": 2},
    "Bill": {"A": 4, "B": 10, "N": 4},
    "Cynthia": {"A": 1, "C": 14, "N": 13},
    "Gloria": {"C": 6, "D": 7},
}
COLORS = {"Curt": (122, 82, 44), "Bill": (128, 128, 128), "Cynthia": (232, 200, 48), "Gloria": (150, 64, 160)}

SPECIAL_PAGE, SPECIAL_PANEL = 12, 5
SPECIAL_CHARS = [("Curt", "N"), ("Cynthia", "C"), ("Bill", "B")]
SPECIAL_LINES = [
    (1, "HI, KIDS! WHAT'S UP?"),
    (2, "SPARKLING WIT… BRILLIANT CONVERSATION… PENETRATING THOUGHT… WHAT DID YOU EXPECT?"),
    (0, "HE MEANS IT'S THE USUAL DULL EVENING!"),
]

DIALOGUE = [
    "WHERE HAVE YOU BEEN ALL NIGHT?", "I TOOK THE LONG ROAD HOME.", "THE CAR IS OUT OF GAS AGAIN!",
    "DON'T LOOK AT ME LIKE THAT.", "WE COULD LEAVE TOMORROW MORNING.", "YOUR FATHER WILL NEVER AGREE.",
    "THE ROSES NEED WATER BEFORE NOON.", "WHO INVITED HIM TO THE PARTY?", "I LIKE THE WAY HE TALKS.",
    "IT'S ONLY A JOB, NOTHING MORE.", "HAND ME THAT SHOVEL, PLEASE.", "ARE YOU COMING TO THE DANCE?",
    "NOT IF YOU ARE BRINGING CURT.", "THE LAKE IS COLD THIS TIME OF YEAR.", "I SAVED SOME MONEY FOR A TICKET.",
    "A TICKET TO WHERE?", "ANYWHERE BUT THIS TOWN!", "MOTHER WANTS YOU HOME BY TEN.",
    "I AM NOT A LITTLE GIRL ANYMORE.", "GOOD EVENING, MISS.", "YOU WORK FOR THE ALLENS, DON'T YOU?",
    "ONLY ON WEEKDAYS.", "THIS PUNCH IS TERRIBLE.", "THEN WHY ARE YOU ON YOUR THIRD GLASS?",
    "LET'S GO OUT ON THE TERRACE.", "THE MUSIC IS TOO LOUD IN HERE.", "I KNEW YOU WOULD COME.",
    "I ALMOST DIDN'T.", "WHAT CHANGED YOUR MIND?", "YOU DID, I SUPPOSE.", "CURT IS LOOKING FOR YOU.",
    "LET HIM LOOK.", "THE TRAIN LEAVES AT SEVEN.", "I'LL BE AT THE STATION.", "PROMISE ME.",
    "I PROMISE.", "GLORIA THROWS THE BEST PARTIES.", "SHE THROWS THE LOUDEST ONES.", "IS THAT A NEW DRESS?",
    "DO YOU LIKE IT?", "IT SUITS YOU.", "WHY DO YOU ALWAYS RUN AWAY?", "BECAUSE NOBODY EVER FOLLOWS ME.",
    "I WOULD FOLLOW YOU.", "THE GARDEN LOOKS LOVELY TONIGHT.", "I PLANTED THOSE LILIES MYSELF.",
    "YOU HAVE A GIFT FOR IT.", "MY HANDS ARE ALWAYS DIRTY.", "THAT'S NOT WHAT I MEANT.",
    "THE GUESTS ARE ARRIVING!", "FETCH MORE ICE FROM THE CELLAR.", "I WON'T BE ORDERED AROUND.",
    "THEN DON'T STAND IN THE DOORWAY.", "HAVE YOU SEEN MY KEYS?", "THEY WERE ON THE PIANO.",
    "WHAT A DREARY AFTERNOON.", "IT WILL RAIN BEFORE SUPPER.", "LET'S TAKE THE BOAT OUT.",
    "IN THIS WEATHER?", "WHY NOT? LIVE A LITTLE!", "I'M TIRED OF THESE DINNERS.", "THEN SKIP ONE.",
    "DAD WOULD BE FURIOUS.", "HE IS ALWAYS FURIOUS.", "YOU'RE LATE AGAIN, BILL.", "THE TRUCK BROKE DOWN.",
    "EXCUSES, EXCUSES.", "I'LL MAKE UP THE HOURS.", "SEE THAT YOU DO.", "WILL YOU WRITE TO ME?",
    "EVERY WEEK.", "GOODBYE, CARLETON!", "WE MADE IT!", "I CAN'T BELIEVE WE ACTUALLY LEFT.",
    "NO MORE PARTIES.", "NO MORE DULL EVENINGS.", "JUST THE TWO OF US.", "AND THE OPEN ROAD.",
]
CAPTIONS = [
    "SATURDAY NIGHT AT THE ALLEN HOUSE.", "MEANWHILE, IN THE GARDEN...", "LATER THAT EVENING.",
    "THE NEXT MORNING.", "ACROSS TOWN...", "AN HOUR PASSES.", "AT GLORIA'S PARTY.", "BY THE LAKE.",
    "SUNDAY.", "THAT SAME NIGHT...", "ON THE TERRACE.", "BACK AT THE HOUSE.", "A WEEK LATER.",
    "THE STATION AT DAWN.", "IN THE KITCHEN.", "AFTER DINNER.", "THE RAIN STARTS TO FALL.",
    "AT THE CLUB.", "MONDAY MORNING.", "OUTSIDE THE GATES.", "HOURS LATER...", "AT LAST.",
    "ON THE ROAD.", "NIGHT FALLS.", "THE LETTER ARRIVES.", "IN THE GREENHOUSE.", "FINALLY ALONE.",
]
SOUND = "BLAM!"


def wrap(text, width):
    words, lines, cur = text.split(), [], ""
    for w in words:
        if cur and len(cur) + 1 + len(w) > width:
            lines.append(cur)
            cur = w
        else:
            cur = f"{cur} {w}" if cur else w
    lines.append(cur)
    return lines


def panel_rects(n):
    rows = ROWS[n]
    margin, gutter = 10, 10
    rh = (H - 2 * margin - (len(rows) - 1) * gutter) // len(rows)
    rects = []
    for r, cols in enumerate(rows):
        cw = (W - 2 * margin - (cols - 1) * gutter) // cols
        for c in range(cols):
            rects.append([margin + c * (cw + gutter), margin + r * (rh + gutter), cw, rh])
    return rects


def assign_characters(rng, panels):
    """Character (identity, target) lists per panel satisfying the ordering constraints."""
    pool = [(ident, tgt) for ident, d in POOL.items() for tgt, k in d.items() for _ in range(k)]
    for sc in SPECIAL_CHARS:
        pool.remove(sc)
    sizes = [2] * 28 + [1] * 16
    special = next(i for i, p in enumerate(panels) if p == (SPECIAL_PAGE, SPECIAL_PANEL))
    while True:
        rng.shuffle(pool)
        rng.shuffle(sizes)
        out, it = [], iter(pool)
        for i in range(len(panels)):
            if i == special:
                out.append(list(SPECIAL_CHARS))
                continue
            out.append([next(it) for _ in range(sizes[i if i < special else i - 1])])
        if any(len({c[0] for c in p}) != len(p) for p in out):
            continue
        order = [t for p in out for t in (x[1] for x in p) if t != "N"]
        firsts = []
        for t in order:
            if t not in firsts:
                firsts.append(t)
        if firsts == ["A", "B", "C", "D"]:
            return out


def cluster_vectors(rng_np, targets):
    """Points on a sphere of radius R inside a 6-dimensional span: five
    directions carry the layout, the sixth keeps the norm constant."""
    basis, _ = np.linalg.qr(rng_np.normal(size=(64, 6)))
    radius = 30.0

    def far(p, others, d):
        return all(np.linalg.norm(p - o) >= d for o in others)

    centers = {}
    for t in "ABCD":
        while True:
            c = rng_np.uniform(-1.0, 1.0, 5)
            if far(c, centers.values(), 1.2):
                centers[t] = c
                break
    noise = []
    zs = []
    for t in targets:
        if t == "N":
            while True:
                d = rng_np.normal(size=5)
                z = d / np.linalg.norm(d) * rng_np.uniform(5.0, 8.0)
                if far(z, noise, 3.5):
                    noise.append(z)
                    break
        else:
            z = centers[t] + rng_np.normal(0, 0.05, 5)
        zs.append(z)
    vecs = []
    for z in zs:
        coords = np.append(z, np.sqrt(radius**2 - z @ z))
        vecs.append(basis @ coords)
    return np.round(np.array(vecs, dtype=np.float32), 6)


def reference_labels(vecs):
    """Normalise, project to 5 principal components, cluster."""
    x = vecs.astype(np.float64)
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    x = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    z = x @ vt[:5].T
    return HDBSCAN(min_cluster_size=MIN_CLUSTER_SIZE).fit_predict(z)


def main():
    rng = random.Random(7)
    panels = [(p, k) for p, n in zip(PAGES, PANELS_PER_PAGE) for k in range(1, n + 1)]
    chars = assign_characters(rng, panels)

    # Text items per panel: associated balloons, tail-less balloons, captions, the sound.
    assoc_counts = {}
    others = [i for i, p in enumerate(panels) if p != (SPECIAL_PAGE, SPECIAL_PANEL)]
    ones = set(rng.sample(others, 10))
    for i in others:
        assoc_counts[i] = 1 if i in ones else 2
    items = {i: [] for i in range(len(panels))}
    dialogue = iter(DIALOGUE)
    captions = iter(CAPTIONS)
    assoc_panels = [i for i in others for _ in range(assoc_counts[i])]
    # Balloon kinds among the 78 ordinary associated balloons.
    kinds = ["single"] * 70 + ["double"] * 2 + ["caption"] * 6
    rng.shuffle(kinds)
    for i, kind in zip(assoc_panels, kinds):
        items[i].append(kind)
    for i in sorted(ones) + rng.sample([i for i in others if i not in ones], 11):
        items[i].append("box")
    light = sorted(others, key=lambda i: (len(items[i]), i))
    for i in light[:4]:
        items[i].append("tailless")
    items[light[4]].append("sound")
    assert all(len(v) <= 3 for v in items.values()), items

    wrong = set(rng.sample([i for i in others if len(chars[i]) >= 2 and assoc_counts[i] >= 1], 9))

    vec_rng = np.random.default_rng(11)
    book_pages, vectors, panel_descriptions = [], {}, {}
    counters = {"t": 0, "b": 0, "ch": 0}
    instance_targets = []
    images = {}
    panel_idx = 0
    for page, n in zip(PAGES, PANELS_PER_PAGE):
        img = Image.new("RGB", (W, H), (255, 255, 255))
        draw = ImageDraw.Draw(img)
        pj = {"index": page, "width": W, "height": H, "panels": [], "text_blocks": [], "balloons": [],
              "characters": [], "associations": [], "associations_gt": []}
        for k, rect in enumerate(panel_rects(n), start=1):
            px, py, pw, ph = rect
            pid = f"p{page}-{k}"
            pj["panels"].append({"id": pid, "bbox": rect, "reading_order": k})
            draw.rectangle([px, py, px + pw - 1, py + ph - 1], outline=(0, 0, 0), width=2)
            draw.rectangle([px + 2, py + int(ph * 0.66), px + pw - 3, py + ph - 3], fill=(236, 228, 214))

            # Characters, left to right in the lower part of the panel.
            cs = chars[panel_idx]
            slot = (pw - 16) // len(cs)
            ids = []
            for j, (ident, tgt) in enumerate(cs):
                counters["ch"] += 1
                cid = f"ch{counters['ch']}"
                bw = min(slot - 8, 70)
                bx = px + 8 + j * slot + (slot - bw) // 2
                by = py + int(ph * 0.70)
                bh = py + ph - 8 - by
                pj["characters"].append({"id": cid, "panel": pid, "body": [bx, by, bw, bh], "reference_identity": ident})
                ids.append(cid)
                instance_targets.append((cid, tgt))
                draw.rectangle([bx, by + bh // 4, bx + bw - 1, by + bh - 1], fill=COLORS[ident])
                draw.ellipse([bx + bw // 4, by, bx + 3 * bw // 4, by + bh // 4], fill=COLORS[ident])
                # Per-instance binary stripe so every crop is distinct.
                for bit in range(8):
                    if (counters["ch"] >> bit) & 1:
                        draw.rectangle([bx + 2 + bit * 4, by + bh - 8, bx + 4 + bit * 4, by + bh - 4], fill=(20, 20, 20))

            # Text, stacked from the top of the panel.
            y = py + 8
            if (page, k) == (SPECIAL_PAGE, SPECIAL_PANEL):
                plan = [("special", s, t) for s, t in SPECIAL_LINES]
            else:
                plan = [(kind, None, None) for kind in items[panel_idx]]
            speaker_cycle = 0
            for kind, sidx, text in plan:
                if kind == "sound":
                    counters["t"] += 1
                    tid = f"t{counters['t']}"
                    lw, lh = len(SOUND) * 24, 40
                    lx, ly = px + (pw - lw) // 2, y
                    pj["text_blocks"].append({"id": tid, "bbox": [lx, ly, lw, lh], "panel": pid, "role_gt": "sound",
                                              "lines": [{"text": SOUND, "bbox": [lx, ly, lw, lh], "baseline_slope": 0.3}]})
                    draw.polygon([(lx, ly + lh), (lx + lw, ly), (lx + lw, ly + 12), (lx + 8, ly + lh)], fill=(210, 40, 30))
                    y += lh + 10
                    continue
                if kind == "box":
                    texts, role = [next(captions)], "caption"
                elif kind == "caption":
                    texts, role = [next(captions)], "caption"
                elif kind == "double":
                    texts, role = [next(dialogue), next(dialogue)], "dialogue"
                elif kind == "special":
                    texts, role = [text], "dialogue"
                else:
                    texts, role = [next(dialogue)], "dialogue"
                block_ids, top = [], y
                bx0 = px + 8 + (speaker_cycle % 2) * 6
                inner_y = y + 5
                maxw = 0
                for t in texts:
                    lines = wrap(t, min(WRAP * 2, (pw - 30) // CHAR_W))
                    counters["t"] += 1
                    tid = f"t{counters['t']}"
                    lw = max(len(l) for l in lines) * CHAR_W
                    maxw = max(maxw, lw)
                    lj = [{"text": l, "bbox": [bx0 + 5, inner_y + i * LINE_STEP, len(l) * CHAR_W, LINE_H], "baseline_slope": 0.0}
                          for i, l in enumerate(lines)]
                    blk = {"id": tid, "bbox": [bx0 + 5, inner_y, lw, len(lines) * LINE_STEP - 2], "panel": pid,
                           "lines": lj, "role_gt": role}
                    pj["text_blocks"].append(blk)
                    block_ids.append(tid)
                    inner_y += len(lines) * LINE_STEP + 2
                bottom = inner_y + 3
                right = bx0 + maxw + 10
                assert right <= px + pw - 4, (pid, texts)
                if kind == "box":
                    draw.rectangle([bx0, top, right, bottom], fill=(250, 240, 170), outline=(0, 0, 0))
                else:
                    counters["b"] += 1
                    bid = f"b{counters['b']}"
                    contour = [[bx0, top], [right, top], [right, bottom], [bx0, bottom]]
                    balloon = {"id": bid, "contour": contour, "text_blocks": block_ids}
                    for tid in block_ids:
                        next(b for b in pj["text_blocks"] if b["id"] == tid)["balloon"] = bid
                    draw.rectangle([bx0, top, right, bottom], fill=(255, 255, 255), outline=(0, 0, 0))
                    if kind != "tailless":
                        if kind == "special":
                            gt_char = ids[sidx]
                            pred_char = gt_char
                        else:
                            gt_char = ids[speaker_cycle % len(ids)]
                            pred_char = gt_char
                            if panel_idx in wrong and speaker_cycle == 0:
                                pred_char = ids[1]
                                gt_char = ids[0]
                        body = next(c for c in pj["characters"] if c["id"] == gt_char)["body"]
                        tip_x = min(max(body[0] + body[2] // 2, bx0 + 4), right - 4)
                        tip = [tip_x, bottom + 14]
                        balloon["tail_tip"] = tip
                        draw.polygon([(tip_x - 5, bottom), (tip_x + 5, bottom), tuple(tip)], fill=(0, 0, 0))
                        pj["associations"].append({"balloon": bid, "character": pred_char})
                        pj["associations_gt"].append({"balloon": bid, "character": gt_char})
                    pj["balloons"].append(balloon)
                for tid in block_ids:
                    blk = next(b for b in pj["text_blocks"] if b["id"] == tid)
                    for line in blk["lines"]:
                        lx, ly, lw, lh = line["bbox"]
                        draw.rectangle([lx, ly + 3, lx + lw - 1, ly + lh - 3], fill=(60, 60, 60))
                speaker_cycle += 1
                y = bottom + 18
                assert y < py + int(ph * 0.70), (pid, y)
            panel_idx += 1
        book_pages.append(pj)
        images[page] = img

    assert counters["t"] == 109 and counters["ch"] == 75 and sum(len(p["panels"]) for p in book_pages) == 45
    assert next(dialogue, None) is None, "unused dialogue lines"

    # Ground-truth descriptions for the first fourteen panels.
    names_of = {c["id"]: c["reference_identity"] for p in book_pages for c in p["characters"]}
    described = 0
    for pj in book_pages:
        for panel in pj["panels"]:
            if described == 14:
                break
            present = [names_of[c["id"]] for c in pj["characters"] if c["panel"] == panel["id"]]
            if (pj["index"], panel["reading_order"]) == (SPECIAL_PAGE, SPECIAL_PANEL):
                panel["description_gt"] = (
                    "At an evening party, Cynthia walks up to Curt and Bill and greets them. Bill answers with a "
                    "joke about the sparkling conversation, and Curt adds that it is the usual dull evening."
                )
            else:
                said = [b for b in pj["text_blocks"] if b["panel"] == panel["id"]]
                who = " and ".join(present)
                lead = f"{who} {'is' if len(present) == 1 else 'are'} shown in the scene."
                quote = " ".join(b["transcription"] if "transcription" in b else " ".join(l["text"] for l in b["lines"]) for b in said)
                panel["description_gt"] = f"{lead} The text reads: {quote.capitalize()}" if quote else lead
            described += 1

    for pj in book_pages:
        # Ground truth links sorted for stable diffs.
        pj["associations"].sort(key=lambda a: a["balloon"])
        pj["associations_gt"].sort(key=lambda a: a["balloon"])

    targets = [t for _, t in instance_targets]
    vecs = cluster_vectors(vec_rng, targets)
    labels = reference_labels(vecs)
    # Expected partition: one cluster per target letter, noise for "N".
    groups = {}
    for (cid, t), l in zip(instance_targets, labels):
        groups.setdefault(t, set()).add(int(l))
    assert groups["N"] == {-1}, groups
    assert all(len(groups[t]) == 1 and -1 not in groups[t] for t in "ABCD"), groups
    assert len({next(iter(groups[t])) for t in "ABCD"}) == 4
    for (cid, _), v in zip(instance_targets, vecs):
        vectors[cid] = [float(f"{x:.6f}") for x in v]

    book = {"format": "comicscript/1", "book_id": "fixture-book", "pages": book_pages}
    OUT.mkdir(exist_ok=True)
    (OUT / "pages").mkdir(exist_ok=True)
    (OUT / "book.json").write_text(json.dumps(book, indent=1) + "\n")
    (OUT / "vectors.json").write_text(json.dumps(vectors) + "\n")
    (OUT / "targets.json").write_text(json.dumps({cid: t for cid, t in instance_targets}, indent=1) + "\n")
    for page, img in images.items():
        img.save(OUT / "pages" / f"page-{page}.png", optimize=True)
    print("ok", {t: len(g) for t, g in groups.items()})


if __name__ == "__main__":
    main()
