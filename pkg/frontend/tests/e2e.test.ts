// Scripted browser test against the real session service (deterministic
// backend): the C15 dialogue, including one injected underspecified turn
// and its clarification, is driven through the UI's own DOM controls, and
// the rendered layer view must match the service snapshot cell-for-cell.

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Api } from "../src/api.js";
import { ArchitectConsole } from "../src/app.js";
import { boot } from "../src/main.js";
import { cellKey } from "../src/state.js";

const PORT = 8900 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;
let server: ChildProcess;

async function until(cond: () => boolean, what: string, ms = 20000, step = 50): Promise<void> {
    const deadline = Date.now() + ms;
    while (Date.now() < deadline) {
        if (cond()) return;
        await new Promise((r) => setTimeout(r, step));
    }
    throw new Error(`timed out waiting for ${what}`);
}

async function serviceReady(): Promise<void> {
    const deadline = Date.now() + 30000;
    while (Date.now() < deadline) {
        try {
            const res = await fetch(`${BASE}/healthz`);
            if (res.ok) return;
        } catch {
            // not up yet
        }
        await new Promise((r) => setTimeout(r, 150));
    }
    throw new Error("service did not come up");
}

beforeAll(async () => {
    // force the polling transport: the test DOM has no EventSource
    delete (globalThis as { EventSource?: unknown }).EventSource;
    const data = mkdtempSync(join(tmpdir(), "console-e2e-"));
    server = spawn(process.env.COBLOCK_BIN ?? "coblock", ["serve", "--port", String(PORT), "--data", data], {
        stdio: "ignore",
    });
    await serviceReady();
});

afterAll(() => {
    server?.kill();
});

function mountPage(): void {
    document.body.innerHTML = `
      <header><button id="enter-replay">replay</button></header>
      <div id="layers"></div>
      <div id="replay"></div>
      <div id="chat"></div>
      <div id="composer">
        <input class="instruction-input" type="text" />
        <button class="instruction-send">send</button>
      </div>
      <div id="shapes"></div>
      <div id="toasts"></div>
    `;
}

function typeInstruction(text: string): void {
    const input = document.querySelector<HTMLInputElement>(".instruction-input")!;
    const send = document.querySelector<HTMLButtonElement>(".instruction-send")!;
    input.value = text;
    send.click();
}

function answerPending(text: string): void {
    const box = document.querySelector<HTMLInputElement>(".pending-question .answer-input")!;
    const send = document.querySelector<HTMLButtonElement>(".pending-question .answer-send")!;
    box.value = text;
    send.click();
}

function occupiedDomCells(): Map<string, { part: string; color: string }> {
    const out = new Map<string, { part: string; color: string }>();
    for (const cell of document.querySelectorAll<HTMLElement>("#layers .cell.occupied")) {
        out.set(cellKey(Number(cell.dataset.x), Number(cell.dataset.y), Number(cell.dataset.z)), {
            part: cell.dataset.part!,
            color: cell.dataset.color!,
        });
    }
    return out;
}

describe("architect console end to end", () => {
    let app: ArchitectConsole;
    const api = new Api(BASE);

    it("boots against a fresh session", async () => {
        mountPage();
        app = await boot(BASE);
        expect(app.state.sessionId).toBeTruthy();
        expect(document.querySelectorAll("#layers .cell.occupied")).toHaveLength(0);
    });

    it("runs the C15 dialogue with an injected clarification through the UI", async () => {
        typeInstruction("Can you place a blue screw at row 4 column 5 height 1");
        await until(() => app.state.cells.size === 1, "first screw rendered");

        typeInstruction("Place a red screw next to the blue screw, and put a red screw on top.");
        await until(() => app.state.cells.size === 3, "three screws rendered");

        typeInstruction("This is what I call a C15");
        await until(
            () => app.state.chat.some((c) => c.kind === "stored" && c.text.includes("C15")),
            "C15 stored",
        );
        await until(() => app.state.shapes.some((s) => s.name === "C15"), "shape listed");

        // injected underspecified turn: the question renders as an inline
        // bubble and the instruction box locks until it is answered
        typeInstruction("Place a nut at the 2nd column, 2nd row.");
        await until(() => app.state.pendingQuestion !== null, "clarification bubble");
        expect(document.querySelector(".pending-question")?.textContent).toContain("color");
        expect(document.querySelector<HTMLInputElement>(".instruction-input")?.disabled).toBe(true);

        // an unusable answer re-renders the same question with the box open
        answerPending("a screwdriver");
        await new Promise((r) => setTimeout(r, 300));
        expect(app.state.pendingQuestion).not.toBeNull();
        expect(document.querySelector(".pending-question")).toBeTruthy();

        answerPending("green");
        await until(() => app.state.cells.size === 4, "clarified nut rendered");
        expect(app.state.pendingQuestion).toBeNull();
        expect(document.querySelector<HTMLInputElement>(".instruction-input")?.disabled).toBe(false);

        typeInstruction("Now make me another C15 at the eighth row and ninth column");
        await until(() => app.state.cells.size === 7, "recalled C15 rendered");
        const recalled = [
            [9, 8, 1],
            [10, 8, 1],
            [10, 8, 2],
        ];
        for (const [x, y, z] of recalled) {
            expect(app.state.cells.get(cellKey(x, y, z))?.part).toBe("screw");
        }
    });

    it("renders the layer view identical to the service snapshot, cell for cell", async () => {
        const state = await api.getState(app.state.sessionId!);
        const want = new Map<string, { part: string; color: string }>();
        for (const record of state.grid) {
            want.set(cellKey(record.x, record.y, record.z), { part: record.part, color: record.color });
            if (record.x2 !== undefined) {
                want.set(cellKey(record.x2, record.y, record.z), { part: record.part, color: record.color });
            }
            if (record.y2 !== undefined) {
                want.set(cellKey(record.x, record.y2, record.z), { part: record.part, color: record.color });
            }
        }
        const got = occupiedDomCells();
        expect(got.size).toBe(want.size);
        for (const [key, content] of want) {
            expect(got.get(key), `cell ${key}`).toEqual(content);
        }
    });

    it("re-applies a stored shape from the library panel data and highlights failures", async () => {
        const ok = await app.applyShape("C15", 13, 12, { color: "purple" });
        expect(ok?.kind).toBe("execute");
        await until(() => app.state.cells.size === 10, "applied copy rendered");
        expect(app.state.cells.get(cellKey(13, 12, 1))?.color).toBe("purple");

        // colliding target: the offending cell is highlighted in the layers
        const bad = await app.applyShape("C15", 9, 8, {});
        expect(bad?.kind).toBe("error");
        await until(
            () => document.querySelectorAll("#layers .cell.offending").length > 0,
            "offending highlight",
        );
        expect(app.state.cells.size).toBe(10); // grid unchanged on error
    });

    it("replays the transcript with the cursor over recorded events", async () => {
        await app.enterReplay();
        expect(document.querySelector(".replay-bar")).toBeTruthy();
        expect(occupiedDomCells().size).toBe(0); // before the first event
        while (app.state.replay && app.state.replay.cursor < app.state.replay.events.length - 1) {
            app.replayStep(1);
        }
        expect(occupiedDomCells().size).toBe(10); // final snapshot again
        app.exitReplay();
        expect(occupiedDomCells().size).toBe(10);
    });

    it("keeps the UI a pure view: a reload re-renders the identical grid", async () => {
        const before = occupiedDomCells();
        const state = await api.getState(app.state.sessionId!);
        // fresh page, fresh console, same session state via events replay
        app.stop();
        mountPage();
        const panels = {
            layers: document.getElementById("layers")!,
            chat: document.getElementById("chat")!,
            composer: document.getElementById("composer")!,
            shapes: document.getElementById("shapes")!,
            toasts: document.getElementById("toasts")!,
            replay: document.getElementById("replay")!,
        };
        const fresh = new ArchitectConsole(api, panels, { pollIntervalMs: 50 });
        fresh.state = { ...fresh.state, sessionId: state.session_id };
        const { events } = await api.pollEvents(state.session_id, -1);
        for (const event of events) {
            fresh.state = (await import("../src/state.js")).applyEvent(fresh.state, event);
        }
        fresh.render();
        const after = occupiedDomCells();
        expect(after.size).toBe(before.size);
        for (const [key, content] of before) {
            expect(after.get(key)).toEqual(content);
        }
    });
});
