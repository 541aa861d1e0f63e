// DOM rendering: stacked 2D z-slice panels, the chat transcript with the
// pending-question bubble, the shape library panel, toasts and the replay
// strip. Rendering is a pure function of ViewState; handlers are wired by
// the controller through data-action attributes.

import { GRID_SIZE, cellKey, replayGrid, topLayer } from "./state.js";
import type { CellContent, ViewState } from "./state.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

export function renderLayers(root: HTMLElement, state: ViewState): void {
    root.textContent = "";
    const cells = state.replay ? replayGrid(state.replay) : state.cells;
    const top = state.replay ? 16 : topLayer(state);
    let maxZ = 1;
    for (const key of cells.keys()) {
        maxZ = Math.max(maxZ, Number(key.split(",")[2]));
    }
    const shown = Math.min(Math.max(state.replay ? maxZ : top, 1), GRID_SIZE);

    for (let z = 1; z <= shown; z++) {
        const panel = el("section", "layer");
        panel.dataset.z = String(z);
        panel.appendChild(el("h3", "layer-title", `height ${z}`));
        const grid = el("div", "layer-grid");
        for (let y = 1; y <= GRID_SIZE; y++) {
            for (let x = 1; x <= GRID_SIZE; x++) {
                const cell = el("div", "cell");
                cell.dataset.x = String(x);
                cell.dataset.y = String(y);
                cell.dataset.z = String(z);
                const content: CellContent | undefined = cells.get(cellKey(x, y, z));
                if (content) {
                    cell.classList.add("occupied", `color-${content.color}`);
                    cell.dataset.part = content.part;
                    cell.dataset.color = content.color;
                    cell.title = `${content.color} ${content.part} @ column ${x}, row ${y}, height ${z}`;
                }
                if (state.highlighted.has(cellKey(x, y, z))) {
                    cell.classList.add("offending");
                }
                grid.appendChild(cell);
            }
        }
        panel.appendChild(grid);
        root.appendChild(panel);
    }
}

export function renderChat(root: HTMLElement, state: ViewState): void {
    root.textContent = "";
    for (const entry of state.chat) {
        const bubble = el("div", `bubble ${entry.role}${entry.kind ? " " + entry.kind : ""}`, entry.text);
        root.appendChild(bubble);
    }
    if (state.pendingQuestion) {
        const ask = el("div", "bubble system pending-question");
        ask.appendChild(el("span", "question-text", state.pendingQuestion.question));
        const input = el("input", "answer-input") as HTMLInputElement;
        input.placeholder = "answer…";
        const send = el("button", "answer-send", "answer") as HTMLButtonElement;
        send.dataset.action = "answer";
        ask.appendChild(input);
        ask.appendChild(send);
        root.appendChild(ask);
    }
    root.scrollTop = root.scrollHeight;
}

export function renderComposer(root: HTMLElement, state: ViewState): void {
    const input = root.querySelector<HTMLInputElement>(".instruction-input");
    const send = root.querySelector<HTMLButtonElement>(".instruction-send");
    const locked = state.pendingQuestion !== null || state.replay !== null;
    if (input) {
        input.disabled = locked;
        input.placeholder = state.pendingQuestion
            ? "answer the question above first"
            : "Place a blue screw at the 5th column, 4th row.";
    }
    if (send) send.disabled = locked;
}

export function renderShapes(root: HTMLElement, state: ViewState): void {
    root.textContent = "";
    if (!state.shapes.length) {
        root.appendChild(el("p", "shapes-empty", "no stored shapes yet"));
        return;
    }
    for (const shape of state.shapes) {
        const row = el("div", "shape-row" + (state.selectedShape === shape.name ? " selected" : ""));
        row.dataset.shape = shape.name;
        row.appendChild(el("span", "shape-name", shape.name));
        row.appendChild(el("span", "shape-meta", `${shape.parts} parts, v${shape.version}`));
        const pick = el("button", "shape-pick", "apply…") as HTMLButtonElement;
        pick.dataset.action = "pick-shape";
        pick.dataset.shape = shape.name;
        row.appendChild(pick);
        root.appendChild(row);
    }
}

export function renderToasts(root: HTMLElement, state: ViewState): void {
    root.textContent = "";
    for (const message of state.toasts) {
        root.appendChild(el("div", "toast", message));
    }
}

export function renderReplay(root: HTMLElement, state: ViewState): void {
    root.textContent = "";
    if (!state.replay) return;
    const { events, cursor } = state.replay;
    const bar = el("div", "replay-bar");
    bar.appendChild(el("span", "replay-pos", `replay ${cursor + 1}/${events.length}`));
    const prev = el("button", "replay-prev", "◀") as HTMLButtonElement;
    prev.dataset.action = "replay-prev";
    prev.disabled = cursor < 0;
    const next = el("button", "replay-next", "▶") as HTMLButtonElement;
    next.dataset.action = "replay-next";
    next.disabled = cursor >= events.length - 1;
    const exit = el("button", "replay-exit", "exit replay") as HTMLButtonElement;
    exit.dataset.action = "replay-exit";
    bar.appendChild(prev);
    bar.appendChild(next);
    bar.appendChild(exit);
    root.appendChild(bar);
    const transcript = el("ol", "replay-transcript");
    events.forEach((event, i) => {
        const text =
            event.type === "instruction" ? String(event.data.text ?? "") : `[${event.type}]`;
        const item = el("li", "replay-entry" + (i === cursor ? " current" : ""), text);
        transcript.appendChild(item);
    });
    root.appendChild(transcript);
}

export interface Panels {
    layers: HTMLElement;
    chat: HTMLElement;
    composer: HTMLElement;
    shapes: HTMLElement;
    toasts: HTMLElement;
    replay: HTMLElement;
}

export function renderAll(panels: Panels, state: ViewState): void {
    renderLayers(panels.layers, state);
    renderChat(panels.chat, state);
    renderComposer(panels.composer, state);
    renderShapes(panels.shapes, state);
    renderToasts(panels.toasts, state);
    renderReplay(panels.replay, state);
}
