#!/usr/bin/env python3
"""Regenerate data/toy: 100 English and 100 Chinese paragraphs plus labeled seeds."""

import json
import random
import sys
from pathlib import Path

EN_SUBJECTS = [
    "The municipal water authority", "A regional hospital network", "The coastal fishing cooperative",
    "An independent bookshop chain", "The university robotics laboratory", "A mountain railway operator",
    "The national weather service", "A community solar project", "The city orchestra",
    "A small vineyard in the valley", "The public library system", "A biotechnology startup",
    "The harbour authority", "A rural school district", "The state archaeology museum",
    "An urban beekeeping society", "The provincial forestry bureau", "A software consultancy",
    "The river conservation trust", "A family-owned bakery",
]
EN_ACTIONS = [
    "reported a steady increase in demand during the winter months",
    "introduced a new scheduling system to reduce waiting times",
    "replaced ageing equipment after a detailed safety review",
    "launched a training programme for volunteers and apprentices",
    "published its annual survey of customer satisfaction",
    "partnered with local farmers to source seasonal ingredients",
    "restored a historic building that had been closed for decades",
    "measured a sharp decline in energy consumption after the upgrade",
    "expanded its services to three neighbouring districts",
    "digitised thousands of fragile documents for public access",
]
EN_DETAILS = [
    "Officials noted that costs fell by roughly twelve percent compared with the previous year.",
    "Staff members described the transition as difficult but ultimately rewarding.",
    "Independent auditors confirmed that the figures were accurate and complete.",
    "Visitors can now book appointments online instead of queuing in person.",
    "The initiative was funded by a combination of grants and private donations.",
    "Critics argued that the timeline was too ambitious for such a small team.",
    "Several neighbouring towns have since asked to adopt the same approach.",
    "Future phases will focus on accessibility for elderly residents.",
    "Engineers expect the new components to last at least twenty years.",
    "A follow-up study will examine the long-term environmental impact.",
]

ZH_SUBJECTS = [
    "市自来水公司", "一家区域医院集团", "沿海渔业合作社", "一家独立书店", "大学机器人实验室",
    "山区铁路运营商", "国家气象局", "社区太阳能项目", "城市交响乐团", "山谷中的小型葡萄园",
    "公共图书馆系统", "一家生物科技初创企业", "港口管理局", "乡村学区", "省考古博物馆",
    "城市养蜂协会", "省林业局", "一家软件咨询公司", "河流保护基金会", "一家家庭面包店",
]
ZH_ACTIONS = [
    "报告冬季需求持续增长", "推出新的排班系统以缩短等待时间", "在详细安全评估后更换了老旧设备",
    "为志愿者和学徒启动了培训计划", "发布了年度客户满意度调查", "与当地农民合作采购时令食材",
    "修复了一座关闭数十年的历史建筑", "升级后能源消耗明显下降", "将服务扩展到三个相邻地区",
    "将数千份易损文献数字化并向公众开放",
]
ZH_DETAILS = [
    "官员表示成本比上一年下降了约百分之十二。", "工作人员认为这次转变虽然艰难但很有收获。",
    "独立审计机构确认数据准确完整。", "访客现在可以在线预约而无需排队。",
    "该项目由政府拨款和私人捐赠共同资助。", "批评者认为对于这样一个小团队来说时间表过于紧张。",
    "此后有几个邻近城镇请求采用同样的做法。", "后续阶段将重点关注老年居民的无障碍需求。",
    "工程师预计新部件至少可以使用二十年。", "一项后续研究将考察其长期环境影响。",
]


def paragraphs(rng, subjects, actions, details, sep, count):
    seen = set()
    out = []
    while len(out) < count:
        s = rng.choice(subjects)
        a = rng.choice(actions)
        d1, d2 = rng.sample(details, 2)
        text = sep.join([f"{s} {a}." if sep == " " else f"{s}{a}。", d1, d2])
        if text in seen:
            continue
        seen.add(text)
        out.append(text)
    return out


def main(root: Path) -> None:
    rng = random.Random(20250101)
    root.mkdir(parents=True, exist_ok=True)
    en = paragraphs(rng, EN_SUBJECTS, EN_ACTIONS, EN_DETAILS, " ", 100)
    zh = paragraphs(rng, ZH_SUBJECTS, ZH_ACTIONS, ZH_DETAILS, "", 100)
    with open(root / "corpus_en.jsonl", "w", encoding="utf-8") as f:
        for i, t in enumerate(en):
            f.write(json.dumps({"id": f"en-{i:03d}", "text": t, "language": "en"}, ensure_ascii=False) + "\n")
    with open(root / "corpus_zh.txt", "w", encoding="utf-8") as f:
        for t in zh:
            f.write(t + "\n")

    seeds = []
    tasks = ["extractive-qa", "nli", "multi-choice-single", "summarization"]
    for i in range(12):
        t = en[i]
        task = tasks[i % 4]
        first = t.split(". ")[0]
        if task == "extractive-qa":
            q, a = "Which organisation is described in the passage?", first.split(" ")[0] + " " + first.split(" ")[1]
        elif task == "nli":
            q, a = f"Premise: {first}. Hypothesis: The organisation made a change. Does the premise entail the hypothesis?", "Yes"
        elif task == "multi-choice-single":
            q, a = "What kind of report is this? A. Sports B. Local news C. Fiction D. Poetry", "B"
        else:
            q, a = "Summarize the paragraph in one sentence.", first + "."
        seeds.append({"id": f"seed-en-{i:02d}", "language": "en", "task": task, "text": t, "question": q, "answer": a})
    for i in range(12):
        t = zh[i]
        task = tasks[i % 4]
        first = t.split("。")[0]
        if task == "extractive-qa":
            q, a = "段落描述的是哪个机构？", first[:4]
        elif task == "nli":
            q, a = f"前提：{first}。假设：该机构做出了改变。前提是否蕴含假设？", "是"
        elif task == "multi-choice-single":
            q, a = "这段文字属于哪类内容？A. 体育 B. 地方新闻 C. 小说 D. 诗歌", "B"
        else:
            q, a = "用一句话概括这段文字。", first + "。"
        seeds.append({"id": f"seed-zh-{i:02d}", "language": "zh", "task": task, "text": t, "question": q, "answer": a})
    with open(root / "seeds.jsonl", "w", encoding="utf-8") as f:
        for s in seeds:
            f.write(json.dumps(s, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "data" / "toy")
