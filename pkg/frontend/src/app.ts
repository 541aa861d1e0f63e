// Controller: wires the API, the event subscription and the renderers.
// State changes only in response to server events; posting a turn renders
// nothing by itself (optimistic rendering is forbidden).

import { Api, ApiError } from "./api.js";
import type { ServiceEvent, TurnOutcome } from "./api.js";
import { subscribe } from "./events.js";
import type { Unsubscribe } from "./events.js";
import { renderAll } from "./render.js";
import type { Panels } from "./render.js";
import { addToast, applyEvent, extractCells, initialState } from "./state.js";
import type { ViewState } from "./state.js";

export interface ConsoleOptions {
    pollIntervalMs?: number;
    shapeLibrary?: string;
}

export class ArchitectConsole {
    state: ViewState = initialState();
    private unsubscribe: Unsubscribe | null = null;

    constructor(
        readonly api: Api,
        readonly panels: Panels,
        readonly options: ConsoleOptions = {},
    ) {}

    async start(): Promise<void> {
        const session = await this.api.createSession(this.options.shapeLibrary);
        this.state = { ...this.state, sessionId: session.session_id };
        await this.refreshShapes();
        this.unsubscribe = subscribe(
            this.api,
            session.session_id,
            -1,
            (event) => this.onEvent(event),
            this.options.pollIntervalMs ?? 250,
        );
        this.render();
    }

    stop(): void {
        this.unsubscribe?.();
        this.unsubscribe = null;
    }

    private onEvent(event: ServiceEvent): void {
        this.state = applyEvent(this.state, event);
        if (event.type === "stored" || event.type === "grid-update") {
            // a turn may have added shapes to the library
            void this.refreshShapes();
        }
        this.render();
    }

    private async refreshShapes(): Promise<void> {
        if (!this.state.sessionId) return;
        try {
            const state = await this.api.getState(this.state.sessionId);
            this.state = { ...this.state, shapes: state.shapes };
            this.render();
        } catch {
            // listing is cosmetic; events remain the source of truth
        }
    }

    /** Posts an instruction. The outcome renders via the event stream; only
     * transport or busy errors surface here, as non-blocking toasts. */
    async submitInstruction(text: string): Promise<TurnOutcome | null> {
        if (!this.state.sessionId) return null;
        if (this.state.pendingQuestion) {
            this.state = addToast(this.state, "answer the pending question first");
            this.render();
            return null;
        }
        try {
            return await this.api.postInstruction(this.state.sessionId, text);
        } catch (err) {
            this.toastError(err);
            return null;
        }
    }

    /** Answers the pending clarification question. An unusable answer makes
     * the service re-ask: the same question bubble renders again. */
    async answerClarification(text: string): Promise<TurnOutcome | null> {
        if (!this.state.sessionId) return null;
        try {
            return await this.api.postAnswer(this.state.sessionId, text);
        } catch (err) {
            this.toastError(err);
            return null;
        }
    }

    /** Issues the recall of a stored shape at a target cell; the service
     * validates collisions/bounds and its error names the offending cells,
     * which the layer view highlights. */
    async applyShape(
        name: string,
        x: number,
        y: number,
        overrides: { color?: string; part?: string; size?: number } = {},
    ): Promise<TurnOutcome | null> {
        if (!this.state.sessionId) return null;
        try {
            const outcome = await this.api.applyShape(this.state.sessionId, name, x, y, overrides);
            if (outcome.kind === "error" && outcome.error) {
                this.state = { ...this.state, highlighted: extractCells(outcome.error) };
                this.render();
            }
            return outcome;
        } catch (err) {
            this.toastError(err);
            return null;
        }
    }

    /** Enters replay mode over the recorded event log: the layer view shows
     * the grid as of the cursor's last grid-update. */
    async enterReplay(): Promise<void> {
        if (!this.state.sessionId) return;
        const { events } = await this.api.pollEvents(this.state.sessionId, -1);
        this.state = { ...this.state, replay: { events, cursor: -1 } };
        this.render();
    }

    replayStep(delta: number): void {
        if (!this.state.replay) return;
        const { events, cursor } = this.state.replay;
        const next = Math.min(Math.max(cursor + delta, -1), events.length - 1);
        this.state = { ...this.state, replay: { events, cursor: next } };
        this.render();
    }

    exitReplay(): void {
        this.state = { ...this.state, replay: null };
        this.render();
    }

    selectShape(name: string | null): void {
        this.state = { ...this.state, selectedShape: name };
        this.render();
    }

    dismissToasts(): void {
        this.state = { ...this.state, toasts: [] };
        this.render();
    }

    private toastError(err: unknown): void {
        const message = err instanceof ApiError ? err.message : String(err);
        this.state = addToast(this.state, message);
        this.render();
    }

    render(): void {
        renderAll(this.panels, this.state);
    }
}
