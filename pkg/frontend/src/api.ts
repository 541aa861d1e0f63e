// Typed client for the session service. Every mutation goes through these
// documented endpoints; the UI never touches state any other way.

export interface PlacedPartRecord {
    id: number;
    part: string;
    color: string;
    x: number;
    y: number;
    z: number;
    x2?: number;
    y2?: number;
}

export interface ShapeInfo {
    name: string;
    version: number;
    parts: number;
}

export interface TurnOutcome {
    kind: "clarify" | "execute" | "stored" | "error";
    question?: string;
    question_id?: string;
    actions?: Record<string, unknown>[];
    stored?: string[];
    error?: string;
}

export interface SessionState {
    session_id: string;
    grid: PlacedPartRecord[];
    dialogue: { role: string; text: string }[];
    shapes: ShapeInfo[];
    pending_question: { question: string; question_id: string } | null;
}

export interface ServiceEvent {
    seq: number;
    type: "instruction" | "question" | "grid-update" | "stored" | "error";
    data: Record<string, unknown>;
}

export class ApiError extends Error {
    constructor(message: string, readonly status: number) {
        super(message);
    }
}

type FetchFn = typeof fetch;

export class Api {
    constructor(
        readonly baseUrl: string,
        private readonly fetchFn: FetchFn = (...args) => fetch(...args),
    ) {}

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        let res: Response;
        try {
            res = await this.fetchFn(`${this.baseUrl}${path}`, {
                method,
                headers: body === undefined ? undefined : { "Content-Type": "application/json" },
                body: body === undefined ? undefined : JSON.stringify(body),
            });
        } catch (err) {
            throw new ApiError(`service unreachable: ${String(err)}`, 0);
        }
        if (!res.ok) {
            let detail = res.statusText;
            try {
                const payload = (await res.json()) as { detail?: string };
                if (payload.detail) detail = payload.detail;
            } catch {
                // non-JSON error body; keep the status text
            }
            throw new ApiError(detail, res.status);
        }
        return (await res.json()) as T;
    }

    createSession(shapeLibrary?: string): Promise<{ session_id: string; grid: PlacedPartRecord[] }> {
        return this.request("POST", "/sessions", shapeLibrary ? { shape_library: shapeLibrary } : {});
    }

    postInstruction(sessionId: string, text: string): Promise<TurnOutcome> {
        return this.request("POST", `/sessions/${sessionId}/instruction`, { text });
    }

    postAnswer(sessionId: string, text: string): Promise<TurnOutcome> {
        return this.request("POST", `/sessions/${sessionId}/answer`, { text });
    }

    getState(sessionId: string): Promise<SessionState> {
        return this.request("GET", `/sessions/${sessionId}/state`);
    }

    pollEvents(sessionId: string, after: number): Promise<{ events: ServiceEvent[] }> {
        return this.request("GET", `/sessions/${sessionId}/events/poll?after=${after}`);
    }

    applyShape(
        sessionId: string,
        name: string,
        x: number,
        y: number,
        overrides: { color?: string; part?: string; size?: number } = {},
    ): Promise<TurnOutcome> {
        return this.request("POST", `/shapes/${encodeURIComponent(name)}/apply`, {
            session_id: sessionId,
            x,
            y,
            ...overrides,
        });
    }
}
