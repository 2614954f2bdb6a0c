// Scripted end-to-end parity: replay each fixture's answer sequence through
// the UI's own session controller against a live service and require the
// final SQL and rewritten question to be byte-identical to what the
// orchestrator produced directly (frozen in the fixtures file).
//
// Needs the Python package installed; skipped unless RUN_PARITY=1.

import { spawn, ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionController } from "../src/controller.js";

interface Fixture {
  db_id: string;
  question: string;
  answers: { question_ref: number; option_index: number }[];
  expected: { sql_before: string; modified_question: string; sql_after: string };
}

const here = dirname(fileURLToPath(import.meta.url));
const fixtures: Fixture[] = JSON.parse(
  readFileSync(join(here, "fixtures", "sessions.json"), "utf-8"),
);

const PORT = 8923;
const BASE = `http://127.0.0.1:${PORT}`;
const enabled = process.env.RUN_PARITY === "1";

let service: ChildProcess | null = null;

async function waitForService(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/schemas`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 300));
  }
  throw new Error("service did not come up");
}

describe.skipIf(!enabled)("UI parity against the live service", () => {
  beforeAll(async () => {
    service = spawn(
      "python3",
      ["-m", "sqlclarify.cli", "serve", "--port", String(PORT)],
      { cwd: join(here, "..", ".."), stdio: "ignore" },
    );
    await waitForService();
  }, 40000);

  afterAll(() => {
    service?.kill();
  });

  it("replays 10 fixture sessions byte-identically", async () => {
    expect(fixtures.length).toBe(10);
    for (const fixture of fixtures) {
      const controller = new SessionController(new ApiClient(BASE));
      let state = await controller.start(fixture.question, fixture.db_id);
      expect(state.view?.sql_before).toBe(fixture.expected.sql_before);
      for (const answer of fixture.answers) {
        expect(state.phase).toBe("asking");
        expect(state.view?.current_question?.ref).toBe(answer.question_ref);
        state = await controller.answer(answer.option_index);
        expect(state.error).toBeNull();
      }
      expect(state.phase).toBe("finalized");
      expect(state.view?.sql_after).toBe(fixture.expected.sql_after);
      expect(state.view?.modified_question).toBe(fixture.expected.modified_question);
    }
  }, 60000);

  it("every question rendered carried 3..5 options with Value and None last", async () => {
    const fixture = fixtures.find((f) => f.answers.length >= 2);
    expect(fixture).toBeDefined();
    const controller = new SessionController(new ApiClient(BASE));
    let state = await controller.start(fixture!.question, fixture!.db_id);
    while (state.phase === "asking") {
      const options = state.view!.current_question!.options;
      expect(options.length).toBeGreaterThanOrEqual(3);
      expect(options.length).toBeLessThanOrEqual(5);
      expect(options[options.length - 2].kind).toBe("value");
      expect(options[options.length - 1].kind).toBe("none");
      state = await controller.answer(options.length - 1); // None
    }
    expect(state.view?.modified_question).toBe(fixture!.question);
    expect(state.view?.sql_after).toBe(state.view?.sql_before);
  }, 60000);
});
