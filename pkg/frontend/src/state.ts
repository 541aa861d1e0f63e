// View state and pure reducers. The grid portion is rebuilt from server
// snapshots only (no optimistic rendering): the UI is a view over events.

import type { PlacedPartRecord, ServiceEvent, ShapeInfo } from "./api.js";

export const GRID_SIZE = 16;

export interface CellContent {
    part: string;
    color: string;
    partId: number;
}

export interface ChatEntry {
    role: "architect" | "system";
    text: string;
    kind?: string;
}

export interface ReplayState {
    events: ServiceEvent[];
    cursor: number; // index into events; -1 = before the first event
}

export interface ViewState {
    sessionId: string | null;
    cells: Map<string, CellContent>; // "x,y,z" -> content
    chat: ChatEntry[];
    pendingQuestion: { question: string; questionId: string } | null;
    shapes: ShapeInfo[];
    selectedShape: string | null;
    highlighted: Set<string>; // offending cells, "x,y,z"
    toasts: string[];
    lastEventSeq: number;
    replay: ReplayState | null;
}

export function initialState(): ViewState {
    return {
        sessionId: null,
        cells: new Map(),
        chat: [],
        pendingQuestion: null,
        shapes: [],
        selectedShape: null,
        highlighted: new Set(),
        toasts: [],
        lastEventSeq: -1,
        replay: null,
    };
}

export function cellKey(x: number, y: number, z: number): string {
    return `${x},${y},${z}`;
}

export function partCells(record: PlacedPartRecord): [number, number, number][] {
    const cells: [number, number, number][] = [[record.x, record.y, record.z]];
    if (record.x2 !== undefined) cells.push([record.x2, record.y, record.z]);
    if (record.y2 !== undefined) cells.push([record.x, record.y2, record.z]);
    return cells;
}

export function gridFromSnapshot(snapshot: PlacedPartRecord[]): Map<string, CellContent> {
    const cells = new Map<string, CellContent>();
    for (const record of snapshot) {
        for (const [x, y, z] of partCells(record)) {
            cells.set(cellKey(x, y, z), { part: record.part, color: record.color, partId: record.id });
        }
    }
    return cells;
}

export function topLayer(state: ViewState): number {
    let top = 1;
    for (const key of state.cells.keys()) {
        const z = Number(key.split(",")[2]);
        if (z > top) top = z;
    }
    return top;
}

/** Folds one server event into the state. Pure apart from Map/Set rebuilds. */
export function applyEvent(state: ViewState, event: ServiceEvent): ViewState {
    const next: ViewState = { ...state, lastEventSeq: Math.max(state.lastEventSeq, event.seq) };
    switch (event.type) {
        case "instruction": {
            next.chat = [...state.chat, { role: "architect", text: String(event.data.text ?? "") }];
            break;
        }
        case "question": {
            const question = String(event.data.question ?? "");
            next.chat = [...state.chat, { role: "system", text: question, kind: "question" }];
            next.pendingQuestion = {
                question,
                questionId: String(event.data.question_id ?? ""),
            };
            break;
        }
        case "grid-update": {
            const snapshot = (event.data.grid ?? []) as PlacedPartRecord[];
            const actions = (event.data.actions ?? []) as unknown[];
            next.cells = gridFromSnapshot(snapshot);
            next.pendingQuestion = null;
            next.highlighted = new Set();
            const stored = (event.data.stored ?? []) as string[];
            const summary =
                `placed ${actions.length} part${actions.length === 1 ? "" : "s"}` +
                (stored.length ? `; stored ${stored.join(", ")}` : "");
            next.chat = [...state.chat, { role: "system", text: summary, kind: "execute" }];
            break;
        }
        case "stored": {
            const names = (event.data.names ?? []) as string[];
            next.pendingQuestion = null;
            next.chat = [...state.chat, { role: "system", text: `stored ${names.join(", ")}`, kind: "stored" }];
            break;
        }
        case "error": {
            const message = String(event.data.message ?? "error");
            next.pendingQuestion = null;
            next.chat = [...state.chat, { role: "system", text: message, kind: "error" }];
            next.toasts = [...state.toasts, message];
            next.highlighted = extractCells(message);
            break;
        }
    }
    return next;
}

/** Pulls "(x, y, z)" cell references out of an error message so the
 * offending cells can be highlighted in the layer view. */
export function extractCells(message: string): Set<string> {
    const out = new Set<string>();
    const pattern = /\((\d+), (\d+), (\d+)\)/g;
    let match;
    while ((match = pattern.exec(message)) !== null) {
        out.add(cellKey(Number(match[1]), Number(match[2]), Number(match[3])));
    }
    return out;
}

export function addToast(state: ViewState, message: string): ViewState {
    return { ...state, toasts: [...state.toasts, message] };
}

export function dismissToasts(state: ViewState): ViewState {
    return { ...state, toasts: [] };
}

/** Grid as seen at the replay cursor: the snapshot carried by the last
 * grid-update event at or before the cursor. */
export function replayGrid(replay: ReplayState): Map<string, CellContent> {
    for (let i = Math.min(replay.cursor, replay.events.length - 1); i >= 0; i--) {
        const event = replay.events[i];
        if (event.type === "grid-update") {
            return gridFromSnapshot((event.data.grid ?? []) as PlacedPartRecord[]);
        }
    }
    return new Map();
}
